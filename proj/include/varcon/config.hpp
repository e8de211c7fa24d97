#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "varcon/core_math.hpp"
#include "varcon/data.hpp"
#include "varcon/optim.hpp"

namespace varcon {

/// Flat key=value settings, as read from a config file or the command line.
using Settings = std::map<std::string, std::string>;

/// Parses `key = value` lines; `#` starts a comment. Throws ConfigError on a
/// malformed line.
Settings parse_settings(const std::string& text);
Settings read_settings_file(const std::filesystem::path& path);

enum class LossKind { varcon, supcon, infonce };

struct RunConfig {
  // data
  std::string dataset = "synthetic";  ///< synthetic | csv | cifar10
  std::string data_path;              ///< CSV file or CIFAR-10 directory
  int classes = 5;
  std::size_t per_class = 256;
  std::size_t input_dim = 32;
  double separation = 6.0;
  std::uint64_t data_seed = 1;
  double val_fraction = 0.2;
  std::size_t train_limit = 0;  ///< 0 keeps every training record
  std::size_t val_limit = 0;

  // objective
  LossKind loss = LossKind::varcon;
  double tau1 = 0.1;
  double epsilon_init = 0.02;
  double epsilon_min = 0.0;
  double epsilon_max = 0.08;
  double epsilon_lr_factor = 0.1;
  bool leave_one_out = false;

  // optimization
  std::size_t batch_size = 128;
  std::size_t epochs = 25;
  std::size_t warmup_epochs = 2;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool balanced_batches = false;

  // encoder
  std::vector<std::size_t> hidden_dims{64};
  std::size_t embed_dim = 16;

  // seeds
  std::uint64_t init_seed = 7;
  std::uint64_t shuffle_seed = 11;
  std::uint64_t aug_seed = 13;

  // augmentation
  double flip_prob = 0.5;
  std::size_t crop_padding = 4;
  double jitter = 0.2;

  std::filesystem::path output_dir = "runs/default";
  bool log_timing = false;

  TemperatureState temperatures() const;
  AugmentationPolicy augmentation() const;
  std::vector<std::size_t> layer_dims(std::size_t in_dim) const;
  /// Throws ConfigError on an invalid combination; returns advisory warnings.
  std::vector<std::string> validate() const;
  /// Canonical key=value text of every field.
  std::string to_settings_text() const;
};

/// Names accepted in config files and as --flags.
const std::vector<std::string>& config_keys();

/// Applies settings over the defaults. Throws ConfigError on an unknown key
/// or an unparsable value.
RunConfig config_from_settings(const Settings& settings);

const char* loss_name(LossKind kind);

}  // namespace varcon
