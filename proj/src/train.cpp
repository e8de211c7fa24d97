#include "varcon/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "varcon/baselines.hpp"
#include "varcon/core_math.hpp"
#include "varcon/optim.hpp"

namespace varcon {

std::string MetricsRecord::to_json_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["lr"] = lr;
  j["loss"] = loss;
  j["kl"] = kl ? nlohmann::ordered_json(*kl) : nullptr;
  j["nll"] = nll ? nlohmann::ordered_json(*nll) : nullptr;
  j["epsilon"] = epsilon;
  j["grad_epsilon"] = grad_epsilon ? nlohmann::ordered_json(*grad_epsilon) : nullptr;
  j["mean_p_anchor"] = mean_anchor_prob ? nlohmann::ordered_json(*mean_anchor_prob) : nullptr;
  if (wall_ms) j["wall_ms"] = *wall_ms;
  return j.dump();
}

namespace {

LabeledDataset truncated(const LabeledDataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  std::vector<std::size_t> idx(limit);
  std::iota(idx.begin(), idx.end(), 0);
  return subset(ds, idx);
}

bool finite(double v) { return std::isfinite(v); }

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), finite);
}

}  // namespace

Datasets load_datasets(const RunConfig& config) {
  Datasets out;
  const std::uint64_t split_seed = mix_seed(config.data_seed, 1);
  if (config.dataset == "synthetic") {
    const auto all = gaussian_mixture(config.classes, config.per_class, config.input_dim,
                                      config.separation, config.data_seed);
    std::tie(out.train, out.val) = train_val_split(all, config.val_fraction, split_seed);
  } else if (config.dataset == "csv") {
    auto all = load_csv(config.data_path);
    all.validate();
    std::tie(out.train, out.val) = train_val_split(all, config.val_fraction, split_seed);
  } else if (config.dataset == "cifar10") {
    const std::filesystem::path root = config.data_path;
    if (std::filesystem::is_directory(root)) {
      std::vector<std::filesystem::path> train_files;
      for (int b = 1; b <= 5; ++b) {
        const auto p = root / ("data_batch_" + std::to_string(b) + ".bin");
        if (std::filesystem::exists(p)) train_files.push_back(p);
      }
      if (train_files.empty()) throw Error("no data_batch_*.bin files under " + root.string());
      out.train = load_cifar10(train_files);
      const auto test = root / "test_batch.bin";
      if (std::filesystem::exists(test)) {
        out.val = load_cifar10(test);
      } else {
        auto all = out.train;
        std::tie(out.train, out.val) = train_val_split(all, config.val_fraction, split_seed);
      }
    } else {
      const auto all = load_cifar10(root);
      std::tie(out.train, out.val) = train_val_split(all, config.val_fraction, split_seed);
    }
  } else {
    throw ConfigError("unknown dataset '" + config.dataset + "'");
  }
  out.train = truncated(out.train, config.train_limit);
  out.val = truncated(out.val, config.val_limit);
  return out;
}

std::vector<std::size_t> epoch_order(const LabeledDataset& data, std::uint64_t seed,
                                     bool balanced) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  if (!balanced) return order;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i : order) by_class[data.labels[i]].push_back(i);
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (std::size_t round = 0; out.size() < order.size(); ++round)
    for (const auto& [_, members] : by_class)
      if (round < members.size()) out.push_back(members[round]);
  return out;
}

EmbeddingBatch embed_dataset(const MlpEncoder& encoder, const LabeledDataset& dataset) {
  constexpr std::size_t kChunk = 512;
  EmbeddingBatch out{Matrix(dataset.size(), encoder.output_dim()), dataset.labels};
  for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, dataset.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const auto tape = encoder.forward(subset(dataset, idx).samples);
    std::copy(tape.normalized.flat().begin(), tape.normalized.flat().end(),
              out.vectors.row(start).begin());
  }
  return out;
}

TrainResult train(const RunConfig& config, const Datasets& data, const MetricsSink& sink) {
  config.validate();
  const LabeledDataset& train_set = data.train;
  if (train_set.size() < 1) throw InvalidArgument("training set is empty");

  TrainResult result;
  result.encoder = MlpEncoder::initialized(config.layer_dims(train_set.input_dim()),
                                           config.init_seed);
  result.initial = result.encoder;
  TemperatureState temps = config.temperatures();
  const EpsilonBounds bounds{config.epsilon_min, config.epsilon_max};
  const AugmentationPolicy policy = config.augmentation();
  const VarconOptions varcon_options{config.leave_one_out};

  const std::size_t batch = std::min(config.batch_size, train_set.size());
  const std::size_t steps_per_epoch = train_set.size() / batch;
  const LrSchedule schedule{config.base_lr, config.warmup_epochs, config.epochs, steps_per_epoch};
  OptimizerState opt(result.encoder.parameter_count(), config.momentum, config.weight_decay);

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order =
        epoch_order(train_set, mix_seed(config.shuffle_seed, epoch), config.balanced_batches);
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      const auto started = std::chrono::steady_clock::now();
      const std::span<const std::size_t> indices(order.data() + b * batch, batch);
      const ViewBatch views = two_views(train_set, policy, indices, step);
      const ForwardTape tape = result.encoder.forward(views.inputs);

      MetricsRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = lr_at(schedule, step);

      Matrix grad_z;
      std::optional<double> grad_eps;
      if (config.loss == LossKind::varcon) {
        const EmbeddingBatch emb{tape.normalized, views.labels};
        LossReport report = varcon_loss(emb, temps, varcon_options);
        rec.loss = report.total;
        rec.kl = report.kl_term;
        rec.nll = report.neg_log_posterior;
        rec.mean_anchor_prob = report.mean_anchor_prob;
        grad_eps = report.grad_epsilon;
        grad_z = std::move(report.grad_z);
      } else {
        const PairwiseBatch pairs{tape.normalized, views.labels, views.view_ids};
        PairwiseLoss loss = config.loss == LossKind::supcon
                                ? supcon_loss_with_grad(pairs, config.tau1)
                                : infonce_loss_with_grad(pairs, config.tau1);
        rec.loss = loss.value;
        grad_z = std::move(loss.grad);
      }
      if (!finite(rec.loss) || !all_finite(grad_z.flat()) || (grad_eps && !finite(*grad_eps)))
        throw TrainingAborted("non-finite loss or gradient at step " + std::to_string(step) +
                                  " (epoch " + std::to_string(epoch) + ")",
                              step);

      const auto param_grads = result.encoder.backward(tape, grad_z);
      sgd_step(result.encoder.parameters(), param_grads, opt, rec.lr);
      if (grad_eps) {
        temps.epsilon =
            epsilon_step(temps.epsilon, *grad_eps, rec.lr * config.epsilon_lr_factor, bounds);
        rec.grad_epsilon = grad_eps;
      }
      rec.epsilon = temps.epsilon;
      if (config.log_timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();
      if (sink) sink(rec);
      result.metrics.push_back(std::move(rec));
    }
  }
  result.epsilon = temps.epsilon;
  return result;
}

TrainResult train_to_directory(const RunConfig& config, const Datasets& data) {
  std::filesystem::create_directories(config.output_dir);
  {
    std::ofstream cfg(config.output_dir / "config.txt", std::ios::trunc);
    cfg << config.to_settings_text();
  }
  std::ofstream metrics(config.output_dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw Error("cannot write metrics under " + config.output_dir.string());
  try {
    TrainResult result =
        train(config, data, [&](const MetricsRecord& rec) { metrics << rec.to_json_line() << '\n'; });
    metrics.flush();
    result.encoder.save(config.output_dir / "checkpoint.vck");
    return result;
  } catch (const TrainingAborted& e) {
    metrics.flush();
    nlohmann::ordered_json dump;
    dump["error"] = e.what();
    dump["step"] = e.step;
    dump["config"] = config.to_settings_text();
    std::ofstream(config.output_dir / "abort.json", std::ios::trunc) << dump.dump(2) << '\n';
    throw;
  }
}

}  // namespace varcon
