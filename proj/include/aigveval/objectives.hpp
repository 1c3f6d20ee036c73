#pragma once

#include "aigveval/common.hpp"

#include <cmath>

namespace aigveval {

struct Batch {
  Vec s;  // predictions
  Vec y;  // MOS targets

  void validate() const {
    if (s.size() != y.size()) throw ValidationError("Batch: prediction/target length mismatch");
    if (!s.allFinite() || !y.allFinite()) throw ValidationError("Batch: non-finite entries");
  }
};

struct LossWeights {
  Real lambda_rank = 0.3;

  void validate() const {
    if (lambda_rank < 0) throw ValidationError("LossWeights: lambda_rank must be >= 0");
  }
};

/// L = (1 - PLCC(s, y)) / 2. Throws on zero variance; use the _train variant
/// inside the optimization loop where collapsed batches must not abort.
inline Real plcc_loss(const Batch& batch, Vec* grad_s = nullptr) {
  batch.validate();
  const auto m = batch.s.size();
  if (m < 2) throw ValidationError("plcc_loss: need at least 2 samples");
  Vec a = batch.s.array() - batch.s.mean();
  Vec b = batch.y.array() - batch.y.mean();
  Real na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw ValidationError("plcc_loss: zero-variance input");
  Real r = a.dot(b) / (na * nb);
  if (grad_s) {
    // dr/da = b/(|a||b|) - r a/|a|^2, then center for the mean subtraction.
    Vec dr = b / (na * nb) - (r / (na * na)) * a;
    Vec centered = dr.array() - dr.mean();
    *grad_s = -0.5 * centered;
  }
  return 0.5 * (1.0 - r);
}

/// Training-mode variant: a zero-variance batch yields loss 1.0 with zero
/// gradient instead of an error, so collapsed initializations survive epoch 0.
inline Real plcc_loss_train(const Batch& batch, Vec* grad_s = nullptr) {
  batch.validate();
  Vec a = batch.s.array() - batch.s.mean();
  Vec b = batch.y.array() - batch.y.mean();
  if (batch.s.size() < 2 || a.norm() == 0.0 || b.norm() == 0.0) {
    if (grad_s) *grad_s = Vec::Zero(batch.s.size());
    return 1.0;
  }
  return plcc_loss(batch, grad_s);
}

/// Pairwise margin rank loss:
///   L = (1/m^2) sum_{i,j} max(0, |y_i - y_j| - e(y_i, y_j) (s_i - s_j))
/// with e = +1 when y_i >= y_j, else -1, so mis-ordered pairs are penalized
/// by their MOS gap. Subgradient 0 at the hinge boundary.
inline Real rank_loss(const Batch& batch, Vec* grad_s = nullptr) {
  batch.validate();
  const auto m = batch.s.size();
  if (m < 1) throw ValidationError("rank_loss: empty batch");
  const Real inv_m2 = 1.0 / (static_cast<Real>(m) * static_cast<Real>(m));
  if (grad_s) *grad_s = Vec::Zero(m);
  Real total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      Real e = batch.y[i] >= batch.y[j] ? 1.0 : -1.0;
      Real arg = std::abs(batch.y[i] - batch.y[j]) - e * (batch.s[i] - batch.s[j]);
      if (arg > 0.0) {
        total += arg;
        if (grad_s) {
          (*grad_s)[i] -= e * inv_m2;
          (*grad_s)[j] += e * inv_m2;
        }
      }
    }
  }
  return total * inv_m2;
}

/// Eq.-8 combination: plcc + lambda * rank.
inline Real total_loss(const Batch& batch, const LossWeights& w, Vec* grad_s = nullptr,
                       bool training = false) {
  w.validate();
  Vec g_plcc, g_rank;
  Real lp = training ? plcc_loss_train(batch, grad_s ? &g_plcc : nullptr)
                     : plcc_loss(batch, grad_s ? &g_plcc : nullptr);
  Real lr = rank_loss(batch, grad_s ? &g_rank : nullptr);
  if (grad_s) *grad_s = g_plcc + w.lambda_rank * g_rank;
  return lp + w.lambda_rank * lr;
}

}  // namespace aigveval
