#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "milvad/mil_loss.hpp"

using namespace milvad;

TEST(RankingHolds, StrictInequality) {
  EXPECT_TRUE(ranking_holds(0.9, 0.1));
  EXPECT_FALSE(ranking_holds(0.5, 0.5));
  EXPECT_FALSE(ranking_holds(0.1, 0.9));
}

TEST(BagMax, LowestIndexWinsTies) {
  std::vector<double> s = {0.3, 0.7, 0.7, 0.2};
  auto [v, i] = bag_max(s);
  EXPECT_EQ(v, 0.7);
  EXPECT_EQ(i, 1u);
  EXPECT_THROW(bag_max({}), Error);
}

TEST(PairLoss, FrozenReferenceValue) {
  // hand-worked example: hinge 0.5, sparsity 9.6e-5, smoothness 9.04e-5
  std::vector<double> pos = {0.2, 0.9, 0.1};
  std::vector<double> neg = {0.3, 0.4};
  ObjectiveConfig cfg;  // margin 1, lambdas 8e-5
  auto r = pair_loss(pos, neg, cfg);
  EXPECT_NEAR(r.hinge_term, 0.5, 1e-12);
  EXPECT_NEAR(r.sparsity_term, 9.6e-5, 1e-15);
  EXPECT_NEAR(r.smoothness_term, 9.04e-5, 1e-15);
  EXPECT_NEAR(r.total, 0.5001864, 1e-9);
  EXPECT_EQ(r.argmax_pos, 1u);
  EXPECT_EQ(r.argmax_neg, 1u);
  ASSERT_EQ(r.grad_pos.size(), 3u);
  ASSERT_EQ(r.grad_neg.size(), 2u);
  EXPECT_NEAR(r.grad_pos[0], -3.2e-5, 1e-12);
  EXPECT_NEAR(r.grad_pos[1], -0.99968, 1e-12);
  EXPECT_NEAR(r.grad_pos[2], -4.8e-5, 1e-12);
  EXPECT_EQ(r.grad_neg[0], 0.0);
  EXPECT_NEAR(r.grad_neg[1], 1.0, 1e-15);
}

TEST(PairLoss, ZeroLambdasGivePureHinge) {
  std::vector<double> pos = {0.2, 0.9, 0.1};
  std::vector<double> neg = {0.3, 0.4};
  ObjectiveConfig cfg{1.0, 0.0, 0.0};
  auto r = pair_loss(pos, neg, cfg);
  EXPECT_EQ(r.sparsity_term, 0.0);
  EXPECT_EQ(r.smoothness_term, 0.0);
  EXPECT_NEAR(r.total, 0.5, 1e-12);
  EXPECT_EQ(r.total, r.hinge_term);
}

TEST(PairLoss, ConstantBagHasZeroSmoothness) {
  std::vector<double> pos(32, 0.625);
  std::vector<double> neg = {0.5};
  auto r = pair_loss(pos, neg, ObjectiveConfig{});
  EXPECT_EQ(r.smoothness_term, 0.0);
}

TEST(PairLoss, InactiveHingeContributesNothing) {
  std::vector<double> pos = {0.1, 0.95};
  std::vector<double> neg = {0.2, 0.05};
  ObjectiveConfig cfg{0.5, 0.0, 0.0};  // 0.5 - 0.95 + 0.2 < 0
  auto r = pair_loss(pos, neg, cfg);
  EXPECT_EQ(r.hinge_term, 0.0);
  EXPECT_EQ(r.total, 0.0);
  for (double g : r.grad_pos) ASSERT_EQ(g, 0.0);
  for (double g : r.grad_neg) ASSERT_EQ(g, 0.0);
}

TEST(PairLoss, HingeAtExactlyZeroIsInactive) {
  // dyadic scores make the slack land on 0.0 exactly
  std::vector<double> pos = {0.75};
  std::vector<double> neg = {0.5};
  ObjectiveConfig cfg{0.25, 0.0, 0.0};
  auto r = pair_loss(pos, neg, cfg);
  EXPECT_EQ(r.hinge_term, 0.0);
  EXPECT_EQ(r.grad_pos[0], 0.0);
  EXPECT_EQ(r.grad_neg[0], 0.0);
}

TEST(PairLoss, UnequalBagLengthsAllowed) {
  std::vector<double> pos = {0.2, 0.9, 0.1};
  std::vector<double> neg = {0.3};
  EXPECT_NO_THROW(pair_loss(pos, neg, ObjectiveConfig{}));
}

TEST(PairLoss, EmptyBagsRejected) {
  std::vector<double> some = {0.5};
  try {
    pair_loss({}, some, ObjectiveConfig{});
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
  try {
    pair_loss(some, {}, ObjectiveConfig{});
    FAIL() << "expected LengthMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::LengthMismatch);
  }
}

TEST(PairLoss, BadConfigRejected) {
  std::vector<double> s = {0.5};
  EXPECT_THROW(pair_loss(s, s, ObjectiveConfig{0.0, 0.0, 0.0}), Error);
  EXPECT_THROW(pair_loss(s, s, ObjectiveConfig{1.0, -1e-9, 0.0}), Error);
  EXPECT_THROW(pair_loss(s, s, ObjectiveConfig{1.0, 0.0, -1e-9}), Error);
}

TEST(PairLoss, NonFiniteScoresRejected) {
  std::vector<double> pos = {std::numeric_limits<double>::infinity()};
  std::vector<double> neg = {0.5};
  try {
    pair_loss(pos, neg, ObjectiveConfig{});
    FAIL() << "expected NonFiniteLoss";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFiniteLoss);
  }
}

TEST(PairLoss, NonNegativeForUnitIntervalScores) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> pos(1 + trial % 7), neg(1 + trial % 5);
    for (double& v : pos) v = u(rng);
    for (double& v : neg) v = u(rng);
    auto r = pair_loss(pos, neg, ObjectiveConfig{});
    ASSERT_GE(r.total, 0.0);
    ASSERT_GE(r.hinge_term, 0.0);
    ASSERT_GE(r.sparsity_term, 0.0);
    ASSERT_GE(r.smoothness_term, 0.0);
  }
}

TEST(PairLoss, HingeShrinksAsSeparationGrows) {
  ObjectiveConfig cfg{1.0, 0.0, 0.0};
  std::vector<double> neg = {0.4};
  double prev = 2.0;
  for (double mp : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    std::vector<double> pos = {mp};
    auto r = pair_loss(pos, neg, cfg);
    ASSERT_LT(r.hinge_term, prev);
    prev = r.hinge_term;
  }
}

TEST(PairLoss, SmoothnessIgnoresCommonShift) {
  std::vector<double> base = {0.1, 0.5, 0.3, 0.9};
  std::vector<double> shifted = base;
  for (double& v : shifted) v += 0.05;
  std::vector<double> neg = {0.2};
  ObjectiveConfig cfg{1.0, 0.0, 0.01};
  auto a = pair_loss(base, neg, cfg);
  auto b = pair_loss(shifted, neg, cfg);
  EXPECT_NEAR(a.smoothness_term, b.smoothness_term, 1e-12);
}

namespace {

// central differences on the scalar objective, away from hinge and argmax
// kinks so the subgradient is the plain gradient there
void fd_check(const std::vector<double>& pos, const std::vector<double>& neg,
              const ObjectiveConfig& cfg) {
  auto eval = [&](const std::vector<double>& p, const std::vector<double>& n) {
    return pair_loss(p, n, cfg).total;
  };
  auto r = pair_loss(pos, neg, cfg);
  const double h = 1e-7;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    auto up = pos, dn = pos;
    up[i] += h;
    dn[i] -= h;
    const double fd = (eval(up, neg) - eval(dn, neg)) / (2 * h);
    ASSERT_NEAR(fd, r.grad_pos[i], 1e-6) << "pos[" << i << "]";
  }
  for (std::size_t i = 0; i < neg.size(); ++i) {
    auto up = neg, dn = neg;
    up[i] += h;
    dn[i] -= h;
    const double fd = (eval(pos, up) - eval(pos, dn)) / (2 * h);
    ASSERT_NEAR(fd, r.grad_neg[i], 1e-6) << "neg[" << i << "]";
  }
}

bool kink_free(const std::vector<double>& pos, const std::vector<double>& neg,
               const ObjectiveConfig& cfg, double gap) {
  auto second_gap = [](const std::vector<double>& v) {
    if (v.size() < 2) return 1.0;
    auto [m, idx] = bag_max(v);
    double second = -1e9;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (i != idx) second = std::max(second, v[i]);
    return m - second;
  };
  const double slack = cfg.margin - bag_max(pos).first + bag_max(neg).first;
  return std::fabs(slack) > gap && second_gap(pos) > gap && second_gap(neg) > gap;
}

}  // namespace

TEST(PairLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ObjectiveConfig cfg{1.0, 0.01, 0.02};
  int done = 0;
  while (done < 50) {
    std::vector<double> pos(3 + done % 6), neg(2 + done % 4);
    for (double& v : pos) v = u(rng);
    for (double& v : neg) v = u(rng);
    if (!kink_free(pos, neg, cfg, 1e-3)) continue;
    fd_check(pos, neg, cfg);
    ++done;
  }
}

TEST(BatchLoss, SinglePairMatchesPairLoss) {
  std::vector<double> pos = {0.2, 0.9, 0.1};
  std::vector<double> neg = {0.3, 0.4};
  ObjectiveConfig cfg;
  auto single = pair_loss(pos, neg, cfg);
  std::vector<std::pair<std::span<const double>, std::span<const double>>> batch = {
      {pos, neg}};
  auto b = batch_loss(batch, cfg);
  EXPECT_EQ(b.mean_total, single.total);
  EXPECT_EQ(b.mean_hinge, single.hinge_term);
  ASSERT_EQ(b.pairs.size(), 1u);
  EXPECT_EQ(b.pairs[0].grad_pos, single.grad_pos);
  EXPECT_EQ(b.pairs[0].grad_neg, single.grad_neg);
}

TEST(BatchLoss, MeansAndGradScaling) {
  std::vector<double> p1 = {0.2, 0.9, 0.1}, n1 = {0.3, 0.4};
  std::vector<double> p2 = {0.6, 0.4}, n2 = {0.5};
  ObjectiveConfig cfg;
  auto a = pair_loss(p1, n1, cfg);
  auto c = pair_loss(p2, n2, cfg);
  std::vector<std::pair<std::span<const double>, std::span<const double>>> batch = {
      {p1, n1}, {p2, n2}};
  auto b = batch_loss(batch, cfg);
  EXPECT_NEAR(b.mean_total, (a.total + c.total) / 2.0, 1e-15);
  EXPECT_NEAR(b.mean_sparsity, (a.sparsity_term + c.sparsity_term) / 2.0, 1e-15);
  // per-pair terms stay unscaled, gradients are halved (exact, power of two)
  EXPECT_EQ(b.pairs[0].total, a.total);
  EXPECT_EQ(b.pairs[1].total, c.total);
  for (std::size_t i = 0; i < a.grad_pos.size(); ++i)
    ASSERT_EQ(b.pairs[0].grad_pos[i], a.grad_pos[i] * 0.5);
  for (std::size_t i = 0; i < c.grad_neg.size(); ++i)
    ASSERT_EQ(b.pairs[1].grad_neg[i], c.grad_neg[i] * 0.5);
}

TEST(BatchLoss, ThirdsScaleLikeTheLibrary) {
  std::vector<double> p = {0.7, 0.2}, n = {0.1};
  ObjectiveConfig cfg;
  auto single = pair_loss(p, n, cfg);
  std::vector<std::pair<std::span<const double>, std::span<const double>>> batch = {
      {p, n}, {p, n}, {p, n}};
  auto b = batch_loss(batch, cfg);
  const double inv = 1.0 / 3.0;
  EXPECT_NEAR(b.mean_total, single.total, 1e-15);
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < single.grad_pos.size(); ++i)
      ASSERT_EQ(b.pairs[k].grad_pos[i], single.grad_pos[i] * inv);
}

TEST(BatchLoss, EmptyBatchRejected) {
  try {
    batch_loss({}, ObjectiveConfig{});
    FAIL() << "expected EmptyBatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyBatch);
  }
}
