#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "varcon/types.hpp"

namespace varcon {

/// Everything backward() needs from one forward pass.
struct ForwardTape {
  Matrix inputs;
  std::vector<Matrix> pre_activations;  ///< one per layer
  std::vector<Matrix> activations;      ///< rectified hidden outputs; last entry is the raw output
  std::vector<double> output_norms;     ///< l2 norm of each raw output row
  Matrix normalized;                    ///< unit-norm embeddings
};

/// Fully connected rectifier network followed by l2 normalization.
///
/// Parameters live in one flat buffer: for each layer, the weight matrix
/// (out x in, row-major) followed by the bias vector. The last layer is
/// linear; every hidden layer is rectified (subgradient 0 at 0).
class MlpEncoder {
public:
  MlpEncoder() = default;
  /// Zero-initialized network with the given widths, input first.
  explicit MlpEncoder(std::vector<std::size_t> layer_dims);
  /// Uniform fan-in/fan-out scaled weights, zero biases.
  static MlpEncoder initialized(std::vector<std::size_t> layer_dims, std::uint64_t seed);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t num_layers() const { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> bias(std::size_t layer);
  std::span<const double> bias(std::size_t layer) const;

  /// Throws ShapeMismatch on a width mismatch, ZeroNorm if a raw output row
  /// has norm < 1e-12.
  ForwardTape forward(const Matrix& inputs) const;

  /// Forward pass packaged as a labelled embedding batch.
  std::pair<EmbeddingBatch, ForwardTape> embed(const Matrix& inputs,
                                               std::span<const int> labels) const;

  /// Parameter gradients (flat layout) given dL/dz at the normalized output.
  /// The normalization Jacobian (I - z z^T)/||u|| is applied here.
  std::vector<double> backward(const ForwardTape& tape, const Matrix& grad_embeddings) const;

  /// Checkpoint bytes: "VCK1", u32 layer count, u32 widths, then per layer
  /// the weights and bias as little-endian float32.
  std::vector<std::uint8_t> to_checkpoint() const;
  static MlpEncoder from_checkpoint(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static MlpEncoder load(const std::filesystem::path& path);

private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }

  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace varcon
