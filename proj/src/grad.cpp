#include "varcon/grad.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "varcon/sample_kernel.hpp"

namespace varcon {

SampleGradient sample_gradient(std::span<const double> z, const Matrix& centroids,
                               std::size_t anchor, const TemperatureState& temps,
                               GradCorruption corruption) {
  const std::size_t classes = centroids.rows();
  const std::size_t dim = centroids.cols();
  const double tau1 = temps.tau1;
  const double eps = temps.epsilon;
  const auto eval = detail::evaluate_sample<double>(z, centroids, anchor, tau1, eps);

  SampleGradient out;
  out.kl = eval.kl;
  out.nll = eval.nll;
  out.p_anchor = eval.p_anchor;
  out.tau2 = eval.tau2;

  // Expected centroid under p and under q.
  std::vector<double> mean_p(dim, 0.0), mean_q(dim, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    const double pk = std::exp(eval.log_p[k]);
    const double qk = std::exp(eval.log_q[k]);
    auto w = centroids.row(k);
    for (std::size_t j = 0; j < dim; ++j) {
      mean_p[j] += pk * w[j];
      mean_q[j] += qk * w[j];
    }
  }

  // Aggregate log-ratio weighted by dq/dtau2:
  //   dq_r/dtau2 = -(C-1) A,  dq_k/dtau2 = A (k != r),
  //   A = e^{1/tau2} / (tau2^2 [C-1+e^{1/tau2}]^2).
  // In the one-hot limit A and A log q both vanish.
  double target_slope = 0.0;
  if (!eval.one_hot) {
    const double a = 1.0 / eval.tau2;
    const double log_a_factor =
        a - 2.0 * std::log(eval.tau2) - 2.0 * detail::log_target_normalizer(a, classes);
    const double log_floor = std::log(detail::kProbFloor);
    double bracket = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      const double log_ratio = eval.log_q[k] - std::max(eval.log_p[k], log_floor);
      bracket += (k == anchor) ? -static_cast<double>(classes - 1) * log_ratio : log_ratio;
    }
    target_slope = std::exp(log_a_factor) * bracket;
  }

  out.grad_epsilon = (2.0 * eval.p_anchor - 1.0) * target_slope;

  // dL/dz = sum_k dq_k/dz log(q_k/p_k)      (alignment, through tau2)
  //       - sum_k (q_k/p_k) dp_k/dz          (= -(E_q[w] - E_p[w]) / tau1)
  //       - (w_r - E_p[w]) / tau1            (centroid attraction)
  // with dp_k/dz = p_k (w_k - E_p[w]) / tau1 and dtau2/dz = 2 eps dp_r/dz.
  const double alignment_scale =
      corruption == GradCorruption::drop_target_chain
          ? 0.0
          : 2.0 * eps * target_slope * eval.p_anchor / tau1;
  const double attraction_scale = corruption == GradCorruption::scale_attraction ? 1.01 : 1.0;
  auto w_r = centroids.row(anchor);
  out.grad_z.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const double toward_anchor = w_r[j] - mean_p[j];
    out.grad_z[j] = alignment_scale * toward_anchor - (mean_q[j] - mean_p[j]) / tau1 -
                    attraction_scale * toward_anchor / tau1;
  }
  return out;
}

std::vector<double> grad_z_analytic(const EmbeddingBatch& batch, const TemperatureState& temps,
                                    std::size_t sample_index, const VarconOptions& options) {
  if (sample_index >= batch.size()) throw InvalidArgument("sample index out of range");
  const CentroidTable table = compute_centroids(batch);
  const std::size_t anchor = table.index_of(batch.labels[sample_index]);
  if (options.leave_one_out)
    return sample_gradient(batch.vectors.row(sample_index),
                           leave_one_out_centroids(batch, table, sample_index), anchor, temps)
        .grad_z;
  return sample_gradient(batch.vectors.row(sample_index), table.centroids, anchor, temps).grad_z;
}

double grad_epsilon_analytic(const EmbeddingBatch& batch, const TemperatureState& temps,
                             const VarconOptions& options) {
  const CentroidTable table = compute_centroids(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t anchor = table.index_of(batch.labels[i]);
    const SampleGradient g =
        options.leave_one_out
            ? sample_gradient(batch.vectors.row(i), leave_one_out_centroids(batch, table, i),
                              anchor, temps)
            : sample_gradient(batch.vectors.row(i), table.centroids, anchor, temps);
    total += g.grad_epsilon;
  }
  return total / static_cast<double>(batch.size());
}

std::vector<double> project_tangent(std::span<const double> grad, std::span<const double> z) {
  if (grad.size() != z.size()) throw ShapeMismatch("gradient and embedding differ in length");
  const double along = dot(grad, z);
  std::vector<double> out(grad.begin(), grad.end());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] -= along * z[j];
  return out;
}

std::vector<double> finite_diff_oracle(const ScalarFunction& loss_fn,
                                       std::span<const double> point, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  std::vector<long double> x(point.begin(), point.end());
  std::vector<double> grad(point.size());
  const long double step = h;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double saved = x[i];
    x[i] = saved + step;
    const long double up = loss_fn(x);
    x[i] = saved - step;
    const long double down = loss_fn(x);
    x[i] = saved;
    grad[i] = static_cast<double>((up - down) / (2 * step));
  }
  return grad;
}

long double sample_loss_extended(std::span<const long double> z, const Matrix& centroids,
                                 std::size_t anchor, long double tau1, long double epsilon) {
  const auto eval = detail::evaluate_sample<long double>(z, centroids, anchor, tau1, epsilon);
  return eval.kl + eval.nll;
}

GradInstance make_grad_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> class_dist(2, 10);
  std::uniform_int_distribution<int> dim_dist(4, 32);
  std::uniform_real_distribution<double> tau_dist(0.05, 0.2);
  std::uniform_real_distribution<double> eps_dist(0.0, 0.05);
  std::uniform_real_distribution<double> spread_dist(0.0, 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int classes = class_dist(rng);
  const int dim = dim_dist(rng);
  GradInstance inst;
  inst.temps.tau1 = tau_dist(rng);
  inst.temps.epsilon = eps_dist(rng);
  inst.temps.eps_min = 0.0;
  inst.temps.eps_max = inst.temps.epsilon;

  Matrix directions(classes, dim);
  for (double& v : directions.flat()) v = normal(rng);
  normalize_rows(directions);

  std::uniform_int_distribution<int> extra_dist(0, 2 * classes);
  std::uniform_int_distribution<int> label_dist(0, classes - 1);
  const int n = classes + extra_dist(rng);
  inst.batch.vectors = Matrix(n, dim);
  inst.batch.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int label = i < classes ? i : label_dist(rng);
    inst.batch.labels[i] = label;
    const double spread = spread_dist(rng);
    auto row = inst.batch.vectors.row(i);
    for (int j = 0; j < dim; ++j) row[j] = spread * directions(label, j) + normal(rng);
  }
  normalize_rows(inst.batch.vectors);
  return inst;
}

GradCheckResult run_grad_check(const GradCheckOptions& options) {
  if (options.probes == 0) throw InvalidArgument("grad check needs at least one probe");
  GradCheckResult result;
  result.num_probes = options.probes;
  double worst = -1.0;
  for (std::size_t probe = 0; probe < options.probes; ++probe) {
    const std::uint64_t seed = options.seed + probe;
    const GradInstance inst = make_grad_instance(seed);
    const auto& batch = inst.batch;
    const auto& temps = inst.temps;
    const CentroidTable table = compute_centroids(batch);
    const long double tau1 = temps.tau1;
    double instance_worst = 0.0;

    double analytic_eps = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t anchor = table.index_of(batch.labels[i]);
      const SampleGradient g = sample_gradient(batch.vectors.row(i), table.centroids, anchor,
                                               temps, options.corruption);
      analytic_eps += g.grad_epsilon;
      const long double eps = temps.epsilon;
      const auto fd = finite_diff_oracle(
          [&](std::span<const long double> z) {
            return sample_loss_extended(z, table.centroids, anchor, tau1, eps);
          },
          batch.vectors.row(i), options.h);
      double scale = 1.0;
      for (double v : fd) scale = std::max(scale, std::abs(v));
      for (std::size_t j = 0; j < fd.size(); ++j) {
        const double abs_err = std::abs(g.grad_z[j] - fd[j]);
        result.max_abs_error = std::max(result.max_abs_error, abs_err);
        result.max_rel_error_z = std::max(result.max_rel_error_z, abs_err / scale);
        instance_worst = std::max(instance_worst, abs_err / scale);
      }
    }
    analytic_eps /= static_cast<double>(batch.size());

    const double eps_point[] = {temps.epsilon};
    const auto fd_eps = finite_diff_oracle(
        [&](std::span<const long double> e) {
          long double total = 0;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            std::vector<long double> z(batch.vectors.row(i).begin(), batch.vectors.row(i).end());
            total += sample_loss_extended(z, table.centroids, table.index_of(batch.labels[i]),
                                          tau1, e[0]);
          }
          return total / static_cast<long double>(batch.size());
        },
        eps_point, options.h);
    const double eps_abs = std::abs(analytic_eps - fd_eps[0]);
    const double eps_rel = eps_abs / std::max(1.0, std::abs(fd_eps[0]));
    result.max_abs_error = std::max(result.max_abs_error, eps_abs);
    result.max_rel_error_eps = std::max(result.max_rel_error_eps, eps_rel);
    instance_worst = std::max(instance_worst, eps_rel);

    if (instance_worst > worst) {
      worst = instance_worst;
      result.worst_instance_seed = seed;
    }
  }
  result.max_rel_error = std::max(result.max_rel_error_z, result.max_rel_error_eps);
  return result;
}

}  // namespace varcon
