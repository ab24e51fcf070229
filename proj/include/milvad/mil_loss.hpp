#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "milvad/error.hpp"

namespace milvad {

/// Weights of the ranking objective: hinge margin, sparsity weight on the
/// positive bag's score sum, smoothness weight on adjacent score differences.
struct ObjectiveConfig {
  double margin = 1.0;
  double lambda1 = 0.00008;
  double lambda2 = 0.00008;
};

inline void validate(const ObjectiveConfig& cfg) {
  if (!(cfg.margin > 0.0)) raise(Errc::ConfigError, "margin must be > 0");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
    raise(Errc::ConfigError, "lambda weights must be >= 0");
}

/// True iff the abnormal score strictly outranks the normal score.
inline bool ranking_holds(double score_abnormal, double score_normal) {
  return score_abnormal > score_normal;
}

/// Maximum and the lowest index attaining it.
inline std::pair<double, std::size_t> bag_max(std::span<const double> scores) {
  if (scores.empty()) raise(Errc::EmptyBag, "bag_max on empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return {scores[best], best};
}

struct BagPairLoss {
  double total = 0.0;
  double hinge_term = 0.0;
  double sparsity_term = 0.0;
  double smoothness_term = 0.0;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
  std::size_t argmax_pos = 0;
  std::size_t argmax_neg = 0;
};

/// Loss for one (abnormal, normal) bag pair:
///
///   max(0, margin - max(pos) + max(neg))
///     + lambda1 * sum_i pos_i
///     + lambda2 * sum_i (pos_i - pos_{i+1})^2
///
/// Sparsity and smoothness act on the positive bag only. Gradients are the
/// analytic subgradients w.r.t. every score; the hinge routes -1/+1 to the
/// two argmax entries when active and contributes nothing at exactly zero.
inline BagPairLoss pair_loss(std::span<const double> pos_scores,
                             std::span<const double> neg_scores,
                             const ObjectiveConfig& cfg) {
  if (pos_scores.empty() || neg_scores.empty())
    raise(Errc::LengthMismatch, "pair_loss requires non-empty score vectors");
  validate(cfg);

  BagPairLoss out;
  out.grad_pos.assign(pos_scores.size(), 0.0);
  out.grad_neg.assign(neg_scores.size(), 0.0);

  auto [max_pos, arg_pos] = bag_max(pos_scores);
  auto [max_neg, arg_neg] = bag_max(neg_scores);
  out.argmax_pos = arg_pos;
  out.argmax_neg = arg_neg;

  const double slack = cfg.margin - max_pos + max_neg;
  if (slack > 0.0) {
    out.hinge_term = slack;
    out.grad_pos[arg_pos] -= 1.0;
    out.grad_neg[arg_neg] += 1.0;
  }

  double score_sum = 0.0;
  for (double s : pos_scores) score_sum += s;
  out.sparsity_term = cfg.lambda1 * score_sum;
  for (double& g : out.grad_pos) g += cfg.lambda1;

  for (std::size_t i = 0; i + 1 < pos_scores.size(); ++i) {
    const double diff = pos_scores[i] - pos_scores[i + 1];
    out.smoothness_term += cfg.lambda2 * diff * diff;
    out.grad_pos[i] += 2.0 * cfg.lambda2 * diff;
    out.grad_pos[i + 1] -= 2.0 * cfg.lambda2 * diff;
  }

  out.total = out.hinge_term + out.sparsity_term + out.smoothness_term;
  if (!std::isfinite(out.total))
    raise(Errc::NonFiniteLoss, "pair loss is not finite");
  return out;
}

struct BatchLoss {
  double mean_total = 0.0;
  double mean_hinge = 0.0;
  double mean_sparsity = 0.0;
  double mean_smoothness = 0.0;
  std::vector<BagPairLoss> pairs;
};

/// Mean pair loss over a batch. Per-pair loss terms stay unscaled; the
/// per-pair gradients are scaled by 1/num_pairs so that accumulating them
/// yields the gradient of the mean.
inline BatchLoss batch_loss(
    std::span<const std::pair<std::span<const double>, std::span<const double>>> pairs,
    const ObjectiveConfig& cfg) {
  if (pairs.empty()) raise(Errc::EmptyBatch, "batch_loss on empty pair list");
  BatchLoss out;
  out.pairs.reserve(pairs.size());
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [pos, neg] : pairs) {
    BagPairLoss pl = pair_loss(pos, neg, cfg);
    out.mean_total += pl.total;
    out.mean_hinge += pl.hinge_term;
    out.mean_sparsity += pl.sparsity_term;
    out.mean_smoothness += pl.smoothness_term;
    for (double& g : pl.grad_pos) g *= inv;
    for (double& g : pl.grad_neg) g *= inv;
    out.pairs.push_back(std::move(pl));
  }
  out.mean_total *= inv;
  out.mean_hinge *= inv;
  out.mean_sparsity *= inv;
  out.mean_smoothness *= inv;
  return out;
}

}  // namespace milvad
