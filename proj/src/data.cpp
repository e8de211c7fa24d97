#include "varcon/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace varcon {

namespace {

constexpr std::size_t kCifarRecord = 3073;
constexpr ImageShape kCifarShape{3, 32, 32};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double parse_double(std::string_view text, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw MalformedFile("bad number '" + std::string(text) + "' on line " + std::to_string(line));
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void LabeledDataset::validate() const {
  if (labels.size() != samples.rows()) throw InvalidArgument("labels do not match samples");
  if (samples.rows() == 0) throw InvalidArgument("dataset is empty");
  for (int label : labels)
    if (label < 0 || label >= class_count)
      throw InvalidArgument("label " + std::to_string(label) + " outside [0, " +
                            std::to_string(class_count) + ")");
  if (is_image() && image.size() != samples.cols())
    throw InvalidArgument("image shape does not match sample width");
}

LabeledDataset gaussian_mixture(int num_classes, std::size_t per_class, std::size_t dim,
                                double separation, std::uint64_t seed) {
  if (num_classes <= 0 || per_class == 0 || dim == 0)
    throw InvalidArgument("gaussian mixture needs positive counts");
  if (separation < 0.0) throw InvalidArgument("separation must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix means(num_classes, dim);
  for (double& v : means.flat()) v = normal(rng);
  for (int c = 0; c < num_classes; ++c) {
    auto row = means.row(c);
    const double n = norm2(row);
    for (double& v : row) v = v / n * separation;
  }

  LabeledDataset ds;
  ds.class_count = num_classes;
  ds.samples = Matrix(num_classes * per_class, dim);
  ds.labels.reserve(num_classes * per_class);
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t s = 0; s < per_class; ++s) {
      auto row = ds.samples.row(ds.labels.size());
      for (std::size_t j = 0; j < dim; ++j) row[j] = means(c, j) + normal(rng);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

LabeledDataset parse_cifar10(std::span<const std::uint8_t> bytes) {
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw MalformedFile("CIFAR-10 data size " + std::to_string(bytes.size()) +
                        " is not a positive multiple of 3073");
  const std::size_t n = bytes.size() / kCifarRecord;
  LabeledDataset ds;
  ds.class_count = 10;
  ds.image = kCifarShape;
  ds.samples = Matrix(n, kCifarShape.size());
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kCifarRecord;
    if (rec[0] > 9)
      throw MalformedFile("record " + std::to_string(i) + " has label byte " +
                          std::to_string(rec[0]));
    ds.labels[i] = rec[0];
    auto row = ds.samples.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = rec[1 + j] / 255.0;
  }
  return ds;
}

LabeledDataset load_cifar10(const std::filesystem::path& path) {
  return parse_cifar10(read_bytes(path));
}

LabeledDataset load_cifar10(std::span<const std::filesystem::path> paths) {
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    auto bytes = read_bytes(p);
    if (bytes.size() % kCifarRecord != 0)
      throw MalformedFile(p.string() + " is not a whole number of CIFAR-10 records");
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar10(all);
}

void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "label";
  for (std::size_t j = 0; j < dataset.input_dim(); ++j) out << ",x" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[i];
    for (double v : dataset.samples.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

LabeledDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw MalformedFile("empty CSV " + path.string());
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "label") throw MalformedFile("CSV header must start with label");
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != dim + 1)
      throw MalformedFile("line " + std::to_string(line_no) + " has " +
                          std::to_string(fields.size()) + " fields");
    const double label = parse_double(fields[0], line_no);
    if (label < 0 || label != std::floor(label))
      throw MalformedFile("bad label on line " + std::to_string(line_no));
    labels.push_back(static_cast<int>(label));
    for (std::size_t j = 1; j < fields.size(); ++j) values.push_back(parse_double(fields[j], line_no));
  }
  LabeledDataset ds;
  ds.samples = Matrix(labels.size(), dim);
  std::copy(values.begin(), values.end(), ds.samples.flat().begin());
  ds.labels = std::move(labels);
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.class_count = dataset.class_count;
  out.image = dataset.image;
  out.samples = Matrix(indices.size(), dataset.input_dim());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= dataset.size()) throw InvalidArgument("subset index out of range");
    std::copy_n(dataset.samples.row(src).begin(), dataset.input_dim(), out.samples.row(i).begin());
    out.labels.push_back(dataset.labels[src]);
  }
  return out;
}

std::pair<LabeledDataset, LabeledDataset> train_val_split(const LabeledDataset& dataset,
                                                          double val_fraction,
                                                          std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw InvalidArgument("validation fraction must lie in [0, 1)");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto val_count =
      static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> val(order.begin(), order.begin() + val_count);
  std::vector<std::size_t> train(order.begin() + val_count, order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {subset(dataset, train), subset(dataset, val)};
}

std::vector<std::size_t> per_class_subsample(const LabeledDataset& dataset,
                                             std::size_t per_class, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  for (auto& [label, members] : by_class) {
    if (members.size() < per_class)
      throw InsufficientSamples("class " + std::to_string(label) + " has " +
                                std::to_string(members.size()) + " samples, need " +
                                std::to_string(per_class));
    std::shuffle(members.begin(), members.end(), rng);
    picked.insert(picked.end(), members.begin(), members.begin() + per_class);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

void AugmentationPolicy::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
  if (!(jitter_strength >= 0.0 && jitter_strength <= 1.0))
    throw ConfigError("jitter strength must lie in [0,1]");
}

void flip_horizontal(std::span<double> image, const ImageShape& shape) {
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (std::size_t y = 0; y < shape.height; ++y) {
      double* row = image.data() + (c * shape.height + y) * shape.width;
      std::reverse(row, row + shape.width);
    }
}

void crop_padded(std::span<double> image, const ImageShape& shape, std::size_t padding,
                 std::size_t offset_y, std::size_t offset_x) {
  if (padding == 0) return;
  std::vector<double> src(image.begin(), image.end());
  for (std::size_t c = 0; c < shape.channels; ++c)
    for (std::size_t y = 0; y < shape.height; ++y)
      for (std::size_t x = 0; x < shape.width; ++x) {
        // padded coordinate -> source coordinate
        const auto sy = static_cast<std::ptrdiff_t>(y + offset_y) - static_cast<std::ptrdiff_t>(padding);
        const auto sx = static_cast<std::ptrdiff_t>(x + offset_x) - static_cast<std::ptrdiff_t>(padding);
        const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(shape.height) &&
                            sx < static_cast<std::ptrdiff_t>(shape.width);
        image[(c * shape.height + y) * shape.width + x] =
            inside ? src[(c * shape.height + sy) * shape.width + sx] : 0.0;
      }
}

namespace {

void augment(std::span<double> row, const LabeledDataset& dataset,
             const AugmentationPolicy& policy, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> scale(1.0 - policy.jitter_strength,
                                               1.0 + policy.jitter_strength);
  if (!dataset.is_image()) {
    if (policy.jitter_strength > 0.0)
      for (double& v : row) v *= scale(rng);
    return;
  }
  const ImageShape& shape = dataset.image;
  if (policy.crop_padding > 0) {
    std::uniform_int_distribution<std::size_t> offset(0, 2 * policy.crop_padding);
    const std::size_t oy = offset(rng);
    const std::size_t ox = offset(rng);
    crop_padded(row, shape, policy.crop_padding, oy, ox);
  }
  if (policy.flip_prob > 0.0 && unit(rng) < policy.flip_prob) flip_horizontal(row, shape);
  if (policy.jitter_strength > 0.0) {
    const std::size_t plane = shape.height * shape.width;
    for (std::size_t c = 0; c < shape.channels; ++c) {
      const double s = scale(rng);
      for (std::size_t p = 0; p < plane; ++p) {
        double& v = row[c * plane + p];
        v = std::clamp(v * s, 0.0, 1.0);
      }
    }
  }
}

}  // namespace

ViewBatch two_views(const LabeledDataset& dataset, const AugmentationPolicy& policy,
                    std::span<const std::size_t> indices, std::uint64_t call_seed) {
  policy.validate();
  ViewBatch out;
  out.inputs = Matrix(2 * indices.size(), dataset.input_dim());
  out.labels.resize(2 * indices.size());
  out.view_ids.resize(2 * indices.size());
  const std::uint64_t stream = mix_seed(policy.rng_seed, call_seed);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= dataset.size()) throw InvalidArgument("view index out of range");
    std::mt19937_64 rng(mix_seed(stream, i));
    for (std::size_t v = 0; v < 2; ++v) {
      auto row = out.inputs.row(2 * i + v);
      std::copy_n(dataset.samples.row(src).begin(), dataset.input_dim(), row.begin());
      augment(row, dataset, policy, rng);
      out.labels[2 * i + v] = dataset.labels[src];
      out.view_ids[2 * i + v] = static_cast<int>(i);
    }
  }
  return out;
}

}  // namespace varcon
