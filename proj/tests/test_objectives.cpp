#include "aigveval/objectives.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace aigveval;
using testutil::random_vec;

namespace {

Real pearson_oracle(const Vec& x, const Vec& y) {
  Real mx = x.mean(), my = y.mean();
  Real num = 0, dx = 0, dy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx += (x[i] - mx) * (x[i] - mx);
    dy += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx * dy);
}

Vec from(std::initializer_list<Real> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (Real x : v) out[i++] = x;
  return out;
}

// Central finite differences on a loss over s.
template <typename Loss>
Vec fd_grad(Loss loss, const Batch& batch, Real step = 1e-6) {
  Vec g(batch.s.size());
  for (Eigen::Index i = 0; i < batch.s.size(); ++i) {
    Batch hi = batch, lo = batch;
    hi.s[i] += step;
    lo.s[i] -= step;
    g[i] = (loss(hi) - loss(lo)) / (2 * step);
  }
  return g;
}

// Re-draw predictions until no pair sits within eps of the hinge boundary.
Batch nudged_batch(Rng& rng, Eigen::Index m, Real eps = 1e-5) {
  for (;;) {
    Batch b{random_vec(rng, m, 1.0, 5.0), random_vec(rng, m, 1.0, 5.0)};
    bool clean = true;
    for (Eigen::Index i = 0; i < m && clean; ++i)
      for (Eigen::Index j = 0; j < m && clean; ++j) {
        if (i == j) continue;  // diagonal is pinned at zero and has no gradient
        Real e = b.y[i] >= b.y[j] ? 1.0 : -1.0;
        Real arg = std::abs(b.y[i] - b.y[j]) - e * (b.s[i] - b.s[j]);
        if (std::abs(arg) < eps) clean = false;
      }
    if (clean) return b;
  }
}

}  // namespace

TEST_CASE("plcc_loss endpoints and oracle") {
  Vec y = from({1, 2, 3});
  CHECK(plcc_loss({y, y}) == doctest::Approx(0.0).epsilon(1e-12));
  Vec anti = -y.array() + 7.0;
  CHECK(plcc_loss({anti, y}) == doctest::Approx(1.0).epsilon(1e-12));
  Batch b{from({1, 2, 4}), from({1, 2, 3})};
  CHECK(plcc_loss(b) == doctest::Approx(0.5 * (1.0 - pearson_oracle(b.s, b.y))).epsilon(1e-14));
}

TEST_CASE("plcc_loss zero variance") {
  CHECK_THROWS_AS(plcc_loss({from({2, 2, 2}), from({1, 2, 3})}), ValidationError);
  Vec grad;
  CHECK(plcc_loss_train({from({2, 2, 2}), from({1, 2, 3})}, &grad) == 1.0);
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("plcc_loss invariant under positive affine transforms of s") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    Batch b{random_vec(rng, 10), random_vec(rng, 10)};
    Vec scaled = 2.5 * b.s.array() + 0.7;
    CHECK(plcc_loss({scaled, b.y}) == doctest::Approx(plcc_loss(b)).epsilon(1e-9));
  }
}

TEST_CASE("rank_loss worked cases") {
  CHECK(rank_loss({from({1, 2}), from({1, 2})}) == 0.0);
  // Mis-ordered pair: both orderings contribute 2, over m^2 = 4 pairs.
  CHECK(rank_loss({from({2, 1}), from({1, 2})}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(rank_loss({from({3, 3, 3}), from({2, 2, 2})}) == 0.0);
}

TEST_CASE("rank_loss nonnegative, zero iff margins met") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Batch b{random_vec(rng, 8), random_vec(rng, 8)};
    Real loss = rank_loss(b);
    CHECK(loss >= 0.0);
    bool all_met = true;
    for (Eigen::Index i = 0; i < 8; ++i)
      for (Eigen::Index j = 0; j < 8; ++j) {
        Real e = b.y[i] >= b.y[j] ? 1.0 : -1.0;
        if (e * (b.s[i] - b.s[j]) < std::abs(b.y[i] - b.y[j])) all_met = false;
      }
    CHECK((loss == 0.0) == all_met);
  }
}

TEST_CASE("rank_loss pair-role symmetry") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Batch b{random_vec(rng, 6), random_vec(rng, 6)};
    // Reversing the batch order sums the same pairs.
    Batch rev{b.s.reverse(), b.y.reverse()};
    CHECK(rank_loss(rev) == doctest::Approx(rank_loss(b)).epsilon(1e-14));
  }
}

TEST_CASE("loss gradients match central finite differences") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    Batch b = nudged_batch(rng, 16);
    Vec g_plcc, g_rank;
    plcc_loss(b, &g_plcc);
    rank_loss(b, &g_rank);
    Vec fd_plcc = fd_grad([](const Batch& x) { return plcc_loss(x); }, b);
    Vec fd_rank = fd_grad([](const Batch& x) { return rank_loss(x); }, b);
    Real denom_p = std::max(1e-8, fd_plcc.norm());
    Real denom_r = std::max(1e-8, fd_rank.norm());
    CHECK((g_plcc - fd_plcc).norm() / denom_p < 1e-4);
    CHECK((g_rank - fd_rank).norm() / denom_r < 1e-4);
  }
}

TEST_CASE("total_loss combines with lambda") {
  Rng rng(43);
  Batch b{random_vec(rng, 12, 1, 5), random_vec(rng, 12, 1, 5)};
  LossWeights w;
  CHECK(w.lambda_rank == 0.3);
  Real total = total_loss(b, w);
  CHECK(total == doctest::Approx(plcc_loss(b) + 0.3 * rank_loss(b)).epsilon(1e-14));
  CHECK(total_loss(b, {0.0}) == doctest::Approx(plcc_loss(b)).epsilon(1e-14));
  Vec g_total, g_p, g_r;
  total_loss(b, w, &g_total);
  plcc_loss(b, &g_p);
  rank_loss(b, &g_r);
  CHECK((g_total - (g_p + 0.3 * g_r)).norm() < 1e-14);
  CHECK_THROWS_AS(total_loss(b, {-0.1}), ValidationError);
}
