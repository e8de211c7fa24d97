#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "varcon/types.hpp"

namespace varcon {

struct ImageShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct LabeledDataset {
  Matrix samples;
  std::vector<int> labels;
  int class_count = 0;
  /// Channel-major layout of each row when the data are images; all zero otherwise.
  ImageShape image;

  std::size_t size() const { return samples.rows(); }
  std::size_t input_dim() const { return samples.cols(); }
  bool is_image() const { return image.size() != 0; }
  /// Throws InvalidArgument if labels fall outside [0, class_count) or shapes disagree.
  void validate() const;
};

/// Class means on a sphere of radius `separation`, unit isotropic noise.
/// Samples are stored class by class.
LabeledDataset gaussian_mixture(int num_classes, std::size_t per_class, std::size_t dim,
                                double separation, std::uint64_t seed);

/// CIFAR-10 binary batch: 3073-byte records (label byte, then 3072 pixel
/// bytes, channel-major R, G, B, each 32x32 row-major). Pixels map to [0,1].
LabeledDataset load_cifar10(const std::filesystem::path& path);
LabeledDataset parse_cifar10(std::span<const std::uint8_t> bytes);
/// Concatenates several batch files in the given order.
LabeledDataset load_cifar10(std::span<const std::filesystem::path> paths);

/// CSV with header `label,x0,...,x{D-1}`.
void save_csv(const LabeledDataset& dataset, const std::filesystem::path& path);
LabeledDataset load_csv(const std::filesystem::path& path);

LabeledDataset subset(const LabeledDataset& dataset, std::span<const std::size_t> indices);

/// Deterministic disjoint split; the validation part gets round(N * fraction) rows.
std::pair<LabeledDataset, LabeledDataset> train_val_split(const LabeledDataset& dataset,
                                                          double val_fraction,
                                                          std::uint64_t seed);

/// `per_class` seeded indices from every class, sorted ascending. Throws
/// InsufficientSamples if a class is too small.
std::vector<std::size_t> per_class_subsample(const LabeledDataset& dataset,
                                             std::size_t per_class, std::uint64_t seed);

struct AugmentationPolicy {
  double flip_prob = 0.5;
  std::size_t crop_padding = 4;
  double jitter_strength = 0.2;  ///< scales drawn from [1 - s, 1 + s]
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Two augmented copies per selected sample. Rows 2i and 2i+1 are the views
/// of indices[i]; both carry view id i and the sample's label.
struct ViewBatch {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<int> view_ids;
};

/// Views are drawn from a stream seeded by (policy seed, call_seed, position),
/// so a repeated call reproduces them exactly. Non-image data get only
/// per-feature multiplicative jitter.
ViewBatch two_views(const LabeledDataset& dataset, const AugmentationPolicy& policy,
                    std::span<const std::size_t> indices, std::uint64_t call_seed);

void flip_horizontal(std::span<double> image, const ImageShape& shape);
/// Zero-pad by `padding` and take the window whose top-left corner is
/// (offset_y, offset_x) in padded coordinates.
void crop_padded(std::span<double> image, const ImageShape& shape, std::size_t padding,
                 std::size_t offset_y, std::size_t offset_x);

/// splitmix64 step, used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace varcon
