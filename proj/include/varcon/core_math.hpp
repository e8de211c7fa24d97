#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "varcon/types.hpp"

namespace varcon {

/// Per-class unit reference vectors computed from one batch.
///
/// Row k of `centroids` belongs to original class `class_ids[k]`; class ids
/// are stored in ascending order. Centroids are constants for every gradient
/// computed downstream.
struct CentroidTable {
  Matrix centroids;
  std::vector<int> class_ids;
  std::vector<std::size_t> member_counts;

  std::size_t size() const { return class_ids.size(); }
  /// Row index of `class_id`; throws InvalidArgument if it is not present.
  std::size_t index_of(int class_id) const;
};

/// Probability vector over the classes present in a batch.
struct ClassDistribution {
  std::vector<double> probs;
  std::size_t anchor = 0;
};

struct TemperatureState {
  double tau1 = 0.1;
  double epsilon = 0.02;
  double eps_min = 0.0;
  double eps_max = 0.08;

  /// Throws ConfigError unless tau1 > 0, eps_min <= epsilon <= eps_max and
  /// tau1 - eps_max > 0.
  void validate() const;
};

struct LossReport {
  double total = 0.0;
  double kl_term = 0.0;
  double neg_log_posterior = 0.0;
  Matrix grad_z;  ///< d(mean loss)/dz, unprojected, one row per sample
  double grad_epsilon = 0.0;
  std::vector<double> per_sample;
  double mean_anchor_prob = 0.0;
};

struct VarconOptions {
  /// Exclude each sample from its own class centroid.
  bool leave_one_out = false;
};

CentroidTable compute_centroids(const EmbeddingBatch& batch);

/// Centroid matrix seen by sample i when it is excluded from its own class
/// mean. Throws DegenerateCentroid for singleton or cancelling classes.
Matrix leave_one_out_centroids(const EmbeddingBatch& batch, const CentroidTable& table,
                               std::size_t i);

ClassDistribution posterior(std::span<const double> z, const CentroidTable& table,
                            double tau1, std::size_t anchor = 0);

/// log p(anchor | z) via log-sum-exp.
double log_posterior(std::span<const double> z, const CentroidTable& table, double tau1,
                     std::size_t anchor);

/// (tau1 - eps) + 2 eps p_anchor.
double adaptive_tau2(double p_anchor, const TemperatureState& temps);

/// Softened one-hot target: anchor gets e^{1/tau2}/(C-1+e^{1/tau2}), the rest
/// 1/(C-1+e^{1/tau2}). Returns the exact one-hot when 1/tau2 > 700.
ClassDistribution target_distribution(std::size_t anchor, std::size_t num_classes, double tau2);

/// KL(q || p) in nats with 0 log 0 = 0. Throws DivergentKL if p_k = 0 where q_k > 0.
double kl_divergence(const ClassDistribution& q, const ClassDistribution& p);

/// Mean VarCon loss over the batch with its term split and analytic
/// gradients (w.r.t. embeddings and epsilon). Centroids come from the batch.
LossReport varcon_loss(const EmbeddingBatch& batch, const TemperatureState& temps,
                       const VarconOptions& options = {});

struct JensenWitness {
  double lhs = 0.0;  ///< log sum_k q_k x_k
  double rhs = 0.0;  ///< sum_k q_k log x_k
};

JensenWitness jensen_gap(std::span<const double> q, std::span<const double> x);

}  // namespace varcon
