#include "varcon/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace varcon {

MlpEncoder::MlpEncoder(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw InvalidArgument("encoder needs at least an input and output width");
  for (std::size_t w : dims_)
    if (w == 0) throw InvalidArgument("encoder widths must be positive");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(offset);
    offset += dims_[l + 1] * dims_[l] + dims_[l + 1];
  }
  params_.assign(offset, 0.0);
}

MlpEncoder MlpEncoder::initialized(std::vector<std::size_t> layer_dims, std::uint64_t seed) {
  MlpEncoder enc(std::move(layer_dims));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < enc.num_layers(); ++l) {
    const double fan_in = static_cast<double>(enc.dims_[l]);
    const double fan_out = static_cast<double>(enc.dims_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : enc.weights(l)) w = dist(rng);
  }
  return enc;
}

std::span<double> MlpEncoder::weights(std::size_t layer) {
  return {params_.data() + weight_offset(layer), dims_[layer + 1] * dims_[layer]};
}
std::span<const double> MlpEncoder::weights(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), dims_[layer + 1] * dims_[layer]};
}
std::span<double> MlpEncoder::bias(std::size_t layer) {
  return {params_.data() + weight_offset(layer) + dims_[layer + 1] * dims_[layer],
          dims_[layer + 1]};
}
std::span<const double> MlpEncoder::bias(std::size_t layer) const {
  return {params_.data() + weight_offset(layer) + dims_[layer + 1] * dims_[layer],
          dims_[layer + 1]};
}

ForwardTape MlpEncoder::forward(const Matrix& inputs) const {
  if (num_layers() == 0) throw InvalidArgument("encoder has no layers");
  if (inputs.cols() != input_dim())
    throw ShapeMismatch("input width " + std::to_string(inputs.cols()) + " but encoder expects " +
                        std::to_string(input_dim()));
  const std::size_t n = inputs.rows();
  ForwardTape tape;
  tape.inputs = inputs;
  const Matrix* current = &tape.inputs;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const auto w = weights(l);
    const auto b = bias(l);
    Matrix pre(n, out);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = current->row(i);
      auto y = pre.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = b[o];
        const double* wr = w.data() + o * in;
        for (std::size_t j = 0; j < in; ++j) acc += wr[j] * x[j];
        y[o] = acc;
      }
    }
    Matrix act = pre;
    if (l + 1 < num_layers())
      for (double& v : act.flat()) v = v > 0.0 ? v : 0.0;
    tape.pre_activations.push_back(std::move(pre));
    tape.activations.push_back(std::move(act));
    current = &tape.activations.back();
  }

  tape.normalized = tape.activations.back();
  tape.output_norms.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = tape.normalized.row(i);
    const double norm = norm2(row);
    if (norm < 1e-12) throw ZeroNorm("encoder output row " + std::to_string(i) + " has zero norm");
    tape.output_norms[i] = norm;
    for (double& v : row) v /= norm;
  }
  return tape;
}

std::pair<EmbeddingBatch, ForwardTape> MlpEncoder::embed(const Matrix& inputs,
                                                         std::span<const int> labels) const {
  if (labels.size() != inputs.rows()) throw ShapeMismatch("label count does not match inputs");
  ForwardTape tape = forward(inputs);
  EmbeddingBatch batch{tape.normalized, std::vector<int>(labels.begin(), labels.end())};
  return {std::move(batch), std::move(tape)};
}

std::vector<double> MlpEncoder::backward(const ForwardTape& tape,
                                         const Matrix& grad_embeddings) const {
  const std::size_t n = tape.normalized.rows();
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != output_dim() ||
      tape.pre_activations.size() != num_layers())
    throw ShapeMismatch("gradient does not match the forward tape");

  // Through the normalization: du = (I - z z^T) dz / ||u||.
  Matrix delta(n, output_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = tape.normalized.row(i);
    const auto g = grad_embeddings.row(i);
    const double along = dot(z, g);
    auto d = delta.row(i);
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = (g[j] - along * z[j]) / tape.output_norms[i];
  }

  std::vector<double> grads(params_.size(), 0.0);
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = dims_[l];
    const std::size_t out = dims_[l + 1];
    const Matrix& below = l == 0 ? tape.inputs : tape.activations[l - 1];
    double* gw = grads.data() + weight_offset(l);
    double* gb = gw + out * in;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = delta.row(i);
      const auto x = below.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += d[o];
        double* row = gw + o * in;
        for (std::size_t j = 0; j < in; ++j) row[j] += d[o] * x[j];
      }
    }
    if (l == 0) break;
    const auto w = weights(l);
    const Matrix& pre_below = tape.pre_activations[l - 1];
    Matrix next(n, in);
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = delta.row(i);
      auto nd = next.row(i);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w.data() + o * in;
        for (std::size_t j = 0; j < in; ++j) nd[j] += d[o] * wr[j];
      }
      const auto pre = pre_below.row(i);
      for (std::size_t j = 0; j < in; ++j)
        if (!(pre[j] > 0.0)) nd[j] = 0.0;
    }
    delta = std::move(next);
  }
  return grads;
}

namespace {

constexpr char kMagic[4] = {'V', 'C', 'K', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw MalformedFile("checkpoint truncated");
  std::uint32_t v = 0;
  for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(bytes[pos + s]) << (8 * s);
  pos += 4;
  return v;
}

}  // namespace

std::vector<std::uint8_t> MlpEncoder::to_checkpoint() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(num_layers()));
  for (std::size_t w : dims_) put_u32(out, static_cast<std::uint32_t>(w));
  for (double v : params_) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

MlpEncoder MlpEncoder::from_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw MalformedFile("checkpoint has a bad magic header");
  std::size_t pos = 4;
  const std::uint32_t layers = get_u32(bytes, pos);
  if (layers == 0 || layers > 1024) throw MalformedFile("implausible checkpoint layer count");
  std::vector<std::size_t> dims;
  for (std::uint32_t l = 0; l <= layers; ++l) dims.push_back(get_u32(bytes, pos));
  MlpEncoder enc(std::move(dims));
  if (bytes.size() - pos != 4 * enc.parameter_count())
    throw MalformedFile("checkpoint payload size does not match its header");
  for (double& v : enc.params_) v = std::bit_cast<float>(get_u32(bytes, pos));
  return enc;
}

void MlpEncoder::save(const std::filesystem::path& path) const {
  const auto bytes = to_checkpoint();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

MlpEncoder MlpEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return from_checkpoint(bytes);
}

}  // namespace varcon
