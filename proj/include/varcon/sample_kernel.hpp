#pragma once

// Per-sample VarCon loss, templated on the scalar type so the same
// composition can be evaluated in extended precision by the gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "varcon/types.hpp"

namespace varcon::detail {

/// Above this 1/tau2 the softened target is replaced by its one-hot limit.
inline constexpr double kSharpLimit = 700.0;
/// Probability floor applied before logs inside the KL term.
inline constexpr double kProbFloor = 1e-300;

template <class T>
void log_softmax(std::span<const T> logits, std::span<T> out) {
  T peak = -std::numeric_limits<T>::infinity();
  for (T v : logits) peak = std::max(peak, v);
  T sum = 0;
  for (T v : logits) sum += std::exp(v - peak);
  const T lse = peak + std::log(sum);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
}

/// log of the normalizer C-1+e^a, stable for large a.
template <class T>
T log_target_normalizer(T a, std::size_t num_classes) {
  const T others = static_cast<T>(num_classes - 1);
  return a + std::log1p(others * std::exp(-a));
}

template <class T>
struct SampleEval {
  T kl = 0;
  T nll = 0;
  T p_anchor = 0;
  T tau2 = 0;
  std::vector<T> log_p;
  std::vector<T> log_q;  // -inf entries for the one-hot limit
  bool one_hot = false;
};

/// Loss terms for one embedding against a fixed centroid matrix.
/// `z` need not be unit norm, which lets finite differences perturb it freely.
template <class T>
SampleEval<T> evaluate_sample(std::span<const T> z, const Matrix& centroids,
                              std::size_t anchor, T tau1, T epsilon) {
  const std::size_t classes = centroids.rows();
  const std::size_t dim = centroids.cols();
  SampleEval<T> out;
  std::vector<T> logits(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    T acc = 0;
    for (std::size_t j = 0; j < dim; ++j) acc += z[j] * static_cast<T>(centroids(k, j));
    logits[k] = acc / tau1;
  }
  out.log_p.resize(classes);
  log_softmax<T>(logits, out.log_p);
  out.nll = -out.log_p[anchor];
  out.p_anchor = std::exp(out.log_p[anchor]);
  out.tau2 = (tau1 - epsilon) + 2 * epsilon * out.p_anchor;

  const T a = 1 / out.tau2;
  out.log_q.assign(classes, -std::numeric_limits<T>::infinity());
  if (a > static_cast<T>(kSharpLimit)) {
    out.one_hot = true;
    out.log_q[anchor] = 0;
  } else {
    const T log_norm = log_target_normalizer(a, classes);
    for (std::size_t k = 0; k < classes; ++k) out.log_q[k] = (k == anchor ? a : T(0)) - log_norm;
  }

  const T log_floor = std::log(static_cast<T>(kProbFloor));
  T kl = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (out.log_q[k] == -std::numeric_limits<T>::infinity()) continue;
    const T q = std::exp(out.log_q[k]);
    kl += q * (out.log_q[k] - std::max(out.log_p[k], log_floor));
  }
  out.kl = kl;
  return out;
}

}  // namespace varcon::detail
