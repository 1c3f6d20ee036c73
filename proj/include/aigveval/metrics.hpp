#pragma once

#include "aigveval/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace aigveval {

struct EvalReport {
  Real plcc = 0, srocc = 0, krcc = 0, rmse = 0, main_score = 0;
  int n = 0;
};

inline void check_pair(const Vec& x, const Vec& y, const char* who) {
  if (x.size() != y.size())
    throw ValidationError(std::string(who) + ": length mismatch");
  if (x.size() < 2) throw ValidationError(std::string(who) + ": need at least 2 samples");
  if (!x.allFinite() || !y.allFinite())
    throw ValidationError(std::string(who) + ": non-finite entries");
}

inline Real plcc(const Vec& x, const Vec& y) {
  check_pair(x, y, "plcc");
  Vec a = x.array() - x.mean();
  Vec b = y.array() - y.mean();
  Real na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ValidationError("plcc: zero-variance input");
  return a.dot(b) / (na * nb);
}

/// Average (fractional) ranks, 1-based; ties share the mean of their ranks.
inline Vec average_ranks(const Vec& x) {
  const auto n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return x[a] < x[b]; });
  Vec ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    Real shared = (static_cast<Real>(i) + static_cast<Real>(j)) / 2.0 + 1.0;
    for (Eigen::Index k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

/// Spearman as Pearson over average ranks. Without ties this reduces to the
/// 1 - 6 sum d^2 / (n (n^2-1)) form.
inline Real srocc(const Vec& x, const Vec& y) {
  check_pair(x, y, "srocc");
  return plcc(average_ranks(x), average_ranks(y));
}

/// Kendall tau-b (tie-corrected pair counting).
inline Real krcc(const Vec& x, const Vec& y) {
  check_pair(x, y, "krcc");
  const auto n = x.size();
  long long concordant = 0, discordant = 0, tx = 0, ty = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      Real dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0.0) ++tx;
      if (dy == 0.0) ++ty;
      if (dx == 0.0 || dy == 0.0) continue;
      if ((dx > 0) == (dy > 0)) ++concordant;
      else ++discordant;
    }
  }
  long long n0 = static_cast<long long>(n) * (n - 1) / 2;
  Real denom = std::sqrt(static_cast<Real>(n0 - tx)) * std::sqrt(static_cast<Real>(n0 - ty));
  if (denom == 0.0) throw ValidationError("krcc: zero untied pairs");
  return static_cast<Real>(concordant - discordant) / denom;
}

inline Real rmse(const Vec& x, const Vec& y) {
  if (x.size() != y.size() || x.size() < 1)
    throw ValidationError("rmse: invalid lengths");
  return std::sqrt((x - y).squaredNorm() / static_cast<Real>(x.size()));
}

/// Challenge metric: mean of absolute PLCC and SROCC.
inline Real main_score(Real plcc_value, Real srocc_value) {
  return (std::abs(plcc_value) + std::abs(srocc_value)) / 2.0;
}

inline EvalReport evaluate_scores(const Vec& predictions, const Vec& mos) {
  EvalReport report;
  report.n = static_cast<int>(predictions.size());
  report.plcc = plcc(predictions, mos);
  report.srocc = srocc(predictions, mos);
  report.krcc = krcc(predictions, mos);
  report.rmse = rmse(predictions, mos);
  report.main_score = main_score(report.plcc, report.srocc);
  return report;
}

}  // namespace aigveval
