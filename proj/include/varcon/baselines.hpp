#pragma once

#include <vector>

#include "varcon/types.hpp"

namespace varcon {

/// Unit embeddings with class labels and augmentation provenance: rows that
/// share a view id are two views of the same source sample.
struct PairwiseBatch {
  Matrix vectors;
  std::vector<int> labels;
  std::vector<int> view_ids;

  std::size_t size() const { return vectors.rows(); }
};

struct PairwiseLoss {
  double value = 0.0;
  Matrix grad;  ///< d(mean loss)/d vectors
};

/// Mean over anchors of -log softmax(z_i . z_pos / tau) against all k != i.
/// An anchor is a row whose view id appears on exactly one other row (its
/// positive); rows with a unique view id only act as negatives. Throws
/// MissingPositive if a view id appears more than twice or no row is an anchor.
double infonce_loss(const PairwiseBatch& batch, double tau);
PairwiseLoss infonce_loss_with_grad(const PairwiseBatch& batch, double tau);

/// Supervised contrastive loss, log outside the positive average. Throws
/// NoPositive for an anchor without another same-class row.
double supcon_loss(const PairwiseBatch& batch, double tau);
PairwiseLoss supcon_loss_with_grad(const PairwiseBatch& batch, double tau);

}  // namespace varcon
