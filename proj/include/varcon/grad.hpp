#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "varcon/core_math.hpp"

namespace varcon {

/// Deliberate analytic-gradient defects, used to confirm the checker fires.
enum class GradCorruption {
  none,
  scale_attraction,   // centroid-attraction term off by 1%
  drop_target_chain,  // ignore the dependence of the target on z through tau2
};

/// Per-sample quantities the analytic gradients are built from.
struct SampleGradient {
  std::vector<double> grad_z;  ///< d(sample loss)/dz, unprojected
  double grad_epsilon = 0.0;   ///< d(sample loss)/d(eps) with p held fixed
  double kl = 0.0;
  double nll = 0.0;
  double p_anchor = 0.0;
  double tau2 = 0.0;
};

/// Loss terms and analytic gradients for a single embedding against a fixed
/// centroid matrix (rows are class centroids, `anchor` is the row of the
/// true class).
SampleGradient sample_gradient(std::span<const double> z, const Matrix& centroids,
                               std::size_t anchor, const TemperatureState& temps,
                               GradCorruption corruption = GradCorruption::none);

/// d L_i / d z_i for sample `sample_index`, where L_i is that sample's own
/// (unaveraged) loss and the batch centroids are held fixed.
std::vector<double> grad_z_analytic(const EmbeddingBatch& batch, const TemperatureState& temps,
                                    std::size_t sample_index, const VarconOptions& options = {});

/// Batch-mean d L / d eps with the encoder held fixed.
double grad_epsilon_analytic(const EmbeddingBatch& batch, const TemperatureState& temps,
                             const VarconOptions& options = {});

/// (I - z z^T) grad.
std::vector<double> project_tangent(std::span<const double> grad, std::span<const double> z);

using ScalarFunction = std::function<long double(std::span<const long double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h on every coordinate,
/// evaluated in long double.
std::vector<double> finite_diff_oracle(const ScalarFunction& loss_fn,
                                       std::span<const double> point, double h = 1e-4);

/// Sample loss evaluated in long double against fixed centroids.
long double sample_loss_extended(std::span<const long double> z, const Matrix& centroids,
                                 std::size_t anchor, long double tau1, long double epsilon);

struct GradCheckResult {
  double max_rel_error = 0.0;      ///< max over z and eps
  double max_abs_error = 0.0;
  double max_rel_error_z = 0.0;
  double max_rel_error_eps = 0.0;
  std::size_t num_probes = 0;
  std::uint64_t worst_instance_seed = 0;
};

struct GradCheckOptions {
  std::size_t probes = 100;
  std::uint64_t seed = 1;
  double h = 1e-4;
  double tolerance = 1e-5;
  GradCorruption corruption = GradCorruption::none;
};

/// One seeded random instance from the checker's family:
/// C in [2,10], d in [4,32], tau1 in [0.05,0.2], eps in [0,0.05].
struct GradInstance {
  EmbeddingBatch batch;
  TemperatureState temps;
};
GradInstance make_grad_instance(std::uint64_t seed);

/// Compares analytic and finite-difference gradients (z and eps) over
/// `options.probes` seeded instances with centroids frozen per instance.
GradCheckResult run_grad_check(const GradCheckOptions& options);

}  // namespace varcon
