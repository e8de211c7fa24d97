#include "varcon/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>

#include "varcon/grad.hpp"
#include "varcon/sample_kernel.hpp"

namespace varcon {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::size_t EmbeddingBatch::num_classes_present() const {
  return std::set<int>(labels.begin(), labels.end()).size();
}

void EmbeddingBatch::validate(double tol) const {
  if (labels.size() != vectors.rows())
    throw InvalidArgument("label count " + std::to_string(labels.size()) +
                          " does not match row count " + std::to_string(vectors.rows()));
  for (std::size_t i = 0; i < vectors.rows(); ++i) {
    if (labels[i] < 0) throw InvalidArgument("negative label at row " + std::to_string(i));
    if (std::abs(norm2(vectors.row(i)) - 1.0) > tol)
      throw InvalidArgument("row " + std::to_string(i) + " is not unit norm");
  }
}

void normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const double n = norm2(row);
    if (n < 1e-12) throw ZeroNorm("row " + std::to_string(i) + " has zero norm");
    for (double& v : row) v /= n;
  }
}

std::size_t CentroidTable::index_of(int class_id) const {
  auto it = std::lower_bound(class_ids.begin(), class_ids.end(), class_id);
  if (it == class_ids.end() || *it != class_id)
    throw InvalidArgument("class " + std::to_string(class_id) + " not present in batch");
  return static_cast<std::size_t>(it - class_ids.begin());
}

void TemperatureState::validate() const {
  if (!(tau1 > 0.0)) throw ConfigError("tau1 must be positive");
  if (!(eps_min <= eps_max)) throw ConfigError("eps_min must not exceed eps_max");
  if (!(eps_min <= epsilon && epsilon <= eps_max))
    throw ConfigError("epsilon must lie within [eps_min, eps_max]");
  if (!(tau1 - eps_max > 0.0)) throw ConfigError("tau1 - eps_max must be positive");
}

CentroidTable compute_centroids(const EmbeddingBatch& batch) {
  if (batch.size() == 0) throw InvalidArgument("empty batch");
  if (batch.labels.size() != batch.size()) throw ShapeMismatch("labels do not match rows");

  std::map<int, std::size_t> counts;
  for (int label : batch.labels) ++counts[label];

  CentroidTable table;
  table.centroids = Matrix(counts.size(), batch.dim());
  for (const auto& [id, count] : counts) {
    table.class_ids.push_back(id);
    table.member_counts.push_back(count);
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto dst = table.centroids.row(table.index_of(batch.labels[i]));
    auto src = batch.vectors.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  for (std::size_t k = 0; k < table.size(); ++k) {
    auto row = table.centroids.row(k);
    const double inv_count = 1.0 / static_cast<double>(table.member_counts[k]);
    for (double& v : row) v *= inv_count;
    const double n = norm2(row);
    if (n < 1e-12)
      throw DegenerateCentroid("class " + std::to_string(table.class_ids[k]) +
                               " has a zero-norm mean embedding");
    for (double& v : row) v /= n;
  }
  return table;
}

ClassDistribution posterior(std::span<const double> z, const CentroidTable& table, double tau1,
                            std::size_t anchor) {
  const std::size_t classes = table.size();
  std::vector<double> logits(classes);
  for (std::size_t k = 0; k < classes; ++k) logits[k] = dot(z, table.centroids.row(k)) / tau1;
  std::vector<double> log_p(classes);
  detail::log_softmax<double>(logits, log_p);

  ClassDistribution out;
  out.anchor = anchor;
  out.probs.resize(classes);
  double sum = 0.0;
  for (std::size_t k = 0; k < classes; ++k) sum += out.probs[k] = std::exp(log_p[k]);
  for (double& p : out.probs) p /= sum;
  return out;
}

double log_posterior(std::span<const double> z, const CentroidTable& table, double tau1,
                     std::size_t anchor) {
  std::vector<double> logits(table.size());
  for (std::size_t k = 0; k < table.size(); ++k) logits[k] = dot(z, table.centroids.row(k)) / tau1;
  std::vector<double> log_p(table.size());
  detail::log_softmax<double>(logits, log_p);
  return log_p.at(anchor);
}

double adaptive_tau2(double p_anchor, const TemperatureState& temps) {
  return (temps.tau1 - temps.epsilon) + 2.0 * temps.epsilon * p_anchor;
}

ClassDistribution target_distribution(std::size_t anchor, std::size_t num_classes, double tau2) {
  if (!(tau2 > 0.0)) throw InvalidArgument("tau2 must be positive");
  if (num_classes < 2) throw InvalidArgument("target distribution needs at least 2 classes");
  if (anchor >= num_classes) throw InvalidArgument("anchor out of range");

  ClassDistribution out;
  out.anchor = anchor;
  out.probs.assign(num_classes, 0.0);
  const double a = 1.0 / tau2;
  if (a > detail::kSharpLimit) {
    out.probs[anchor] = 1.0;
    return out;
  }
  const double log_norm = detail::log_target_normalizer(a, num_classes);
  const double other = std::exp(-log_norm);
  for (std::size_t k = 0; k < num_classes; ++k) out.probs[k] = other;
  out.probs[anchor] = std::exp(a - log_norm);
  return out;
}

double kl_divergence(const ClassDistribution& q, const ClassDistribution& p) {
  if (q.probs.size() != p.probs.size()) throw ShapeMismatch("distributions differ in length");
  double kl = 0.0;
  for (std::size_t k = 0; k < q.probs.size(); ++k) {
    const double qk = q.probs[k];
    if (qk <= 0.0) continue;
    if (p.probs[k] <= 0.0)
      throw DivergentKL("p is zero where q is positive at index " + std::to_string(k));
    kl += qk * (std::log(qk) - std::log(std::max(p.probs[k], detail::kProbFloor)));
  }
  return kl;
}

Matrix leave_one_out_centroids(const EmbeddingBatch& batch, const CentroidTable& table,
                               std::size_t i) {
  const std::size_t k = table.index_of(batch.labels[i]);
  const std::size_t count = table.member_counts[k];
  if (count < 2)
    throw DegenerateCentroid("class " + std::to_string(batch.labels[i]) +
                             " has a single member; leave-one-out centroid is undefined");
  Matrix centroids = table.centroids;
  auto row = centroids.row(k);
  std::fill(row.begin(), row.end(), 0.0);
  for (std::size_t m = 0; m < batch.size(); ++m) {
    if (m == i || batch.labels[m] != batch.labels[i]) continue;
    auto src = batch.vectors.row(m);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += src[j];
  }
  const double n = norm2(row);
  if (n < 1e-12) throw DegenerateCentroid("leave-one-out centroid has zero norm");
  for (double& v : row) v /= n;
  return centroids;
}

LossReport varcon_loss(const EmbeddingBatch& batch, const TemperatureState& temps,
                       const VarconOptions& options) {
  temps.validate();
  const CentroidTable table = compute_centroids(batch);
  const std::size_t n = batch.size();

  LossReport report;
  report.grad_z = Matrix(n, batch.dim());
  report.per_sample.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t anchor = table.index_of(batch.labels[i]);
    SampleGradient g =
        options.leave_one_out
            ? sample_gradient(batch.vectors.row(i), leave_one_out_centroids(batch, table, i),
                              anchor, temps)
            : sample_gradient(batch.vectors.row(i), table.centroids, anchor, temps);
    report.per_sample[i] = g.kl + g.nll;
    report.kl_term += g.kl;
    report.neg_log_posterior += g.nll;
    report.grad_epsilon += g.grad_epsilon;
    report.mean_anchor_prob += g.p_anchor;
    auto dst = report.grad_z.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = g.grad_z[j] * inv_n;
  }
  report.kl_term *= inv_n;
  report.neg_log_posterior *= inv_n;
  report.total = report.kl_term + report.neg_log_posterior;
  report.grad_epsilon *= inv_n;
  report.mean_anchor_prob *= inv_n;
  return report;
}

JensenWitness jensen_gap(std::span<const double> q, std::span<const double> x) {
  if (q.size() != x.size()) throw ShapeMismatch("q and x differ in length");
  JensenWitness out;
  double mix = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (!(x[k] > 0.0)) throw InvalidArgument("x must be strictly positive");
    mix += q[k] * x[k];
    if (q[k] > 0.0) out.rhs += q[k] * std::log(x[k]);
  }
  out.lhs = std::log(mix);
  return out;
}

}  // namespace varcon
