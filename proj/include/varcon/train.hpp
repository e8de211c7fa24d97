#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "varcon/config.hpp"
#include "varcon/data.hpp"
#include "varcon/encoder.hpp"

namespace varcon {

/// One optimizer step's log line.
struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> kl;   ///< VarCon only
  std::optional<double> nll;  ///< VarCon only
  double epsilon = 0.0;       ///< value after this step's update
  std::optional<double> grad_epsilon;
  std::optional<double> mean_anchor_prob;
  std::optional<double> wall_ms;  ///< only with log_timing, breaks byte-identical logs

  std::string to_json_line() const;
};

/// Raised when a step produces a non-finite loss or gradient.
class TrainingAborted : public Error {
public:
  TrainingAborted(const std::string& what, std::size_t step_) : Error(what), step(step_) {}
  std::size_t step;
};

struct Datasets {
  LabeledDataset train;
  LabeledDataset val;
};

/// Builds the train/validation split described by the config.
Datasets load_datasets(const RunConfig& config);

struct TrainResult {
  MlpEncoder initial;
  MlpEncoder encoder;
  std::vector<MetricsRecord> metrics;
  double epsilon = 0.0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Shuffled mini-batches of two augmented views; per step the selected loss
/// and its gradient, backward through the encoder, SGD, and (VarCon only) the
/// clamped epsilon step. Nothing is written to disk.
TrainResult train(const RunConfig& config, const Datasets& data, const MetricsSink& sink = {});

/// train() plus artifacts in config.output_dir: metrics.jsonl, checkpoint.vck
/// and config.txt. A non-finite step also leaves abort.json behind.
TrainResult train_to_directory(const RunConfig& config, const Datasets& data);

/// Encodes a whole dataset in fixed-size chunks.
EmbeddingBatch embed_dataset(const MlpEncoder& encoder, const LabeledDataset& dataset);

/// Training order for one epoch: a seeded shuffle, or per-class round robin
/// when `balanced` is set.
std::vector<std::size_t> epoch_order(const LabeledDataset& data, std::uint64_t seed,
                                     bool balanced);

}  // namespace varcon
