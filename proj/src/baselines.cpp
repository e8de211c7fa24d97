#include "varcon/baselines.hpp"

#include <cmath>
#include <string>

#include "varcon/sample_kernel.hpp"

namespace varcon {

namespace {

void check_shape(const PairwiseBatch& batch, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
  if (batch.labels.size() != batch.size() || batch.view_ids.size() != batch.size())
    throw ShapeMismatch("labels/view ids do not match rows");
  if (batch.size() < 2) throw InvalidArgument("contrastive losses need at least two rows");
}

// Shared core: positives[i] lists the positive rows of anchor i (empty for a
// row that only serves as a negative); the denominator always runs over every
// k != i and the loss is averaged over anchors.
PairwiseLoss contrastive(const PairwiseBatch& batch, double tau,
                         const std::vector<std::vector<std::size_t>>& positives, bool want_grad) {
  const std::size_t n = batch.size();
  std::size_t anchors = 0;
  for (const auto& pos : positives) anchors += !pos.empty();
  const double inv_anchors = 1.0 / static_cast<double>(anchors);
  PairwiseLoss out;
  if (want_grad) out.grad = Matrix(n, batch.vectors.cols());

  std::vector<double> logits(n), log_prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pos = positives[i];
    if (pos.empty()) continue;
    const auto zi = batch.vectors.row(i);
    std::vector<double> others;
    others.reserve(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
      logits[k] = dot(zi, batch.vectors.row(k)) / tau;
      if (k != i) others.push_back(logits[k]);
    }
    std::vector<double> others_log(others.size());
    detail::log_softmax<double>(others, others_log);
    for (std::size_t k = 0, m = 0; k < n; ++k) log_prob[k] = (k == i) ? 0.0 : others_log[m++];

    const double inv_pos = 1.0 / static_cast<double>(pos.size());
    double anchor_loss = 0.0;
    for (std::size_t p : pos) anchor_loss -= log_prob[p];
    out.value += anchor_loss * inv_pos;

    if (!want_grad) continue;
    // dL_i/ds_ik = (softmax_k - [k in P(i)]/|P(i)|) / tau for k != i.
    std::vector<double> coeff(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) coeff[k] = std::exp(log_prob[k]);
    for (std::size_t p : pos) coeff[p] -= inv_pos;
    auto gi = out.grad.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double c = coeff[k] * inv_anchors / tau;
      const auto zk = batch.vectors.row(k);
      auto gk = out.grad.row(k);
      for (std::size_t j = 0; j < gi.size(); ++j) {
        gi[j] += c * zk[j];
        gk[j] += c * zi[j];
      }
    }
  }
  out.value *= inv_anchors;
  return out;
}

std::vector<std::vector<std::size_t>> infonce_positives(const PairwiseBatch& batch) {
  const std::size_t n = batch.size();
  std::vector<std::vector<std::size_t>> pos(n);
  bool any_anchor = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k)
      if (k != i && batch.view_ids[k] == batch.view_ids[i]) pos[i].push_back(k);
    if (pos[i].size() > 1)
      throw MissingPositive("row " + std::to_string(i) + " has " +
                            std::to_string(pos[i].size()) + " same-view partners, expected 1");
    any_anchor = any_anchor || !pos[i].empty();
  }
  if (!any_anchor) throw MissingPositive("no row has a second view to serve as its positive");
  return pos;
}

std::vector<std::vector<std::size_t>> supcon_positives(const PairwiseBatch& batch) {
  const std::size_t n = batch.size();
  std::vector<std::vector<std::size_t>> pos(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k)
      if (k != i && batch.labels[k] == batch.labels[i]) pos[i].push_back(k);
    if (pos[i].empty())
      throw NoPositive("anchor " + std::to_string(i) + " (class " +
                       std::to_string(batch.labels[i]) + ") has no positive");
  }
  return pos;
}

}  // namespace

double infonce_loss(const PairwiseBatch& batch, double tau) {
  check_shape(batch, tau);
  return contrastive(batch, tau, infonce_positives(batch), false).value;
}

PairwiseLoss infonce_loss_with_grad(const PairwiseBatch& batch, double tau) {
  check_shape(batch, tau);
  return contrastive(batch, tau, infonce_positives(batch), true);
}

double supcon_loss(const PairwiseBatch& batch, double tau) {
  check_shape(batch, tau);
  return contrastive(batch, tau, supcon_positives(batch), false).value;
}

PairwiseLoss supcon_loss_with_grad(const PairwiseBatch& batch, double tau) {
  check_shape(batch, tau);
  return contrastive(batch, tau, supcon_positives(batch), true);
}

}  // namespace varcon
