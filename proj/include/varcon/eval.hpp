#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "varcon/data.hpp"
#include "varcon/types.hpp"

namespace varcon {

struct KnnConfig {
  std::size_t k = 10;  ///< neighbours by cosine distance 1 - z.r
};

struct KnnResult {
  std::vector<int> predictions;
  double accuracy = 0.0;  ///< fraction of queries whose prediction matches their label
};

/// Majority vote over the k nearest references. Neighbour ties at equal
/// distance prefer the smaller label; vote ties go to the smaller cumulative
/// distance, then the smaller label.
KnnResult knn_classify(const EmbeddingBatch& refs, const EmbeddingBatch& queries,
                       const KnnConfig& cfg);

/// One agglomeration step. Clusters are named by their smallest member index.
struct WardMerge {
  std::size_t left = 0;   ///< smaller cluster id
  std::size_t right = 0;  ///< larger cluster id (absorbed into `left`)
  double cost = 0.0;      ///< increase in within-cluster sum of squares
};

/// Full Ward agglomeration (N-1 merges) via the Lance-Williams recurrence on
/// squared Euclidean distances. Exact ties merge the lexicographically
/// smallest cluster pair.
std::vector<WardMerge> ward_linkage(const Matrix& points);

/// Flat labels after cutting the Ward tree at `num_clusters` clusters.
/// Clusters are numbered 0.. in order of their smallest member.
std::vector<int> ward_cluster(const Matrix& points, std::size_t num_clusters);

struct ClusteringReport {
  double ari = 0.0;
  double nmi = 0.0;
  double homogeneity = 0.0;
  double completeness = 0.0;
  double v_measure = 0.0;
  double purity = 0.0;
};

/// External clustering indices; NMI normalizes by the arithmetic mean of
/// the two entropies.
ClusteringReport clustering_metrics(std::span<const int> true_labels,
                                    std::span<const int> cluster_labels);

struct FewShotReport {
  std::size_t per_class_n = 0;
  std::size_t repeats = 0;
  std::vector<double> accuracies;
  double mean = 0.0;
  double stderr_ = 0.0;  ///< sample standard deviation / sqrt(repeats); 0 for one repeat
};

FewShotReport summarize_few_shot(std::size_t per_class_n, std::vector<double> accuracies);

/// Repeats: draw `per_class_n` samples per class (seeded), `train_fn(subset,
/// seed)` builds a model, `eval_fn(model)` scores it.
template <class TrainFn, class EvalFn>
FewShotReport few_shot_eval(const LabeledDataset& dataset, std::size_t per_class_n,
                            std::size_t repeats, std::uint64_t seed, TrainFn&& train_fn,
                            EvalFn&& eval_fn) {
  if (repeats == 0) throw InvalidArgument("few-shot evaluation needs at least one repeat");
  std::vector<double> accuracies;
  for (std::size_t r = 0; r < repeats; ++r) {
    const std::uint64_t repeat_seed = mix_seed(seed, r);
    const auto indices = per_class_subsample(dataset, per_class_n, repeat_seed);
    const LabeledDataset part = subset(dataset, indices);
    auto model = train_fn(part, repeat_seed);
    accuracies.push_back(static_cast<double>(eval_fn(model)));
  }
  return summarize_few_shot(per_class_n, std::move(accuracies));
}

}  // namespace varcon
