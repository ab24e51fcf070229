#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "milvad/error.hpp"

namespace milvad {

enum class OptimizerKind { Adagrad, Adam };

inline const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::Adagrad ? "adagrad" : "adam";
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adagrad;
  double learning_rate = 0.001;
  double epsilon = 1e-8;
  double beta1 = 0.9;   // Adam only
  double beta2 = 0.999; // Adam only
};

/// Per-parameter optimizer state over a fixed list of parameter tensors
/// ("slots"). Adagrad keeps the running sum of squared gradients; Adam keeps
/// first and second moments.
class OptimizerState {
 public:
  OptimizerState(OptimizerConfig cfg, std::span<const std::size_t> slot_sizes)
      : cfg_(cfg) {
    accum_sq_.reserve(slot_sizes.size());
    for (std::size_t n : slot_sizes) accum_sq_.emplace_back(n, 0.0);
    if (cfg_.kind == OptimizerKind::Adam) {
      accum_m_.reserve(slot_sizes.size());
      for (std::size_t n : slot_sizes) accum_m_.emplace_back(n, 0.0);
    }
  }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t step_count() const noexcept { return step_count_; }
  std::size_t slot_count() const noexcept { return accum_sq_.size(); }
  std::span<const double> accum_sq(std::size_t slot) const { return accum_sq_[slot]; }
  std::span<const double> accum_m(std::size_t slot) const { return accum_m_[slot]; }

  std::vector<std::vector<double>>& accum_sq_buffers() { return accum_sq_; }
  std::vector<std::vector<double>>& accum_m_buffers() { return accum_m_; }
  void set_step_count(std::uint64_t t) { step_count_ = t; }

  /// One optimizer step over every slot. `params[i]` and `grads[i]` must
  /// match the slot sizes given at construction.
  void apply_step(std::span<const std::span<double>> params,
                  std::span<const std::span<const double>> grads) {
    if (params.size() != accum_sq_.size() || grads.size() != accum_sq_.size())
      raise(Errc::ShapeMismatch, "slot count mismatch in optimizer step");
    for (std::size_t s = 0; s < params.size(); ++s) {
      if (params[s].size() != accum_sq_[s].size() ||
          grads[s].size() != accum_sq_[s].size())
        raise(Errc::ShapeMismatch, "parameter shape mismatch in slot " + std::to_string(s));
      for (double g : grads[s])
        if (!std::isfinite(g)) raise(Errc::NonFiniteGradient, "non-finite gradient");
    }
    ++step_count_;
    if (cfg_.kind == OptimizerKind::Adagrad) {
      for (std::size_t s = 0; s < params.size(); ++s)
        adagrad_slot(params[s], grads[s], accum_sq_[s]);
    } else {
      for (std::size_t s = 0; s < params.size(); ++s)
        adam_slot(params[s], grads[s], accum_m_[s], accum_sq_[s]);
    }
  }

 private:
  void adagrad_slot(std::span<double> p, std::span<const double> g,
                    std::vector<double>& sq) {
    const double lr = cfg_.learning_rate, eps = cfg_.epsilon;
    for (std::size_t i = 0; i < p.size(); ++i) {
      sq[i] += g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(sq[i]) + eps);
    }
  }

  void adam_slot(std::span<double> p, std::span<const double> g,
                 std::vector<double>& m, std::vector<double>& v) {
    const double lr = cfg_.learning_rate, eps = cfg_.epsilon;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }

  OptimizerConfig cfg_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> accum_sq_;  // Adagrad G, Adam v
  std::vector<std::vector<double>> accum_m_;   // Adam m
};

/// G += g^2; theta -= lr * g / (sqrt(G) + eps), over a single slot.
inline void adagrad_step(std::span<double> params, std::span<const double> grads,
                         OptimizerState& state) {
  if (state.config().kind != OptimizerKind::Adagrad)
    raise(Errc::ConfigError, "adagrad_step on non-Adagrad state");
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  state.apply_step(p, g);
}

/// Bias-corrected Adam update over a single slot.
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      OptimizerState& state) {
  if (state.config().kind != OptimizerKind::Adam)
    raise(Errc::ConfigError, "adam_step on non-Adam state");
  const std::span<double> p[] = {params};
  const std::span<const double> g[] = {grads};
  state.apply_step(p, g);
}

/// The optimizer/learning-rate grid swept by the harness.
inline std::vector<std::pair<OptimizerKind, double>> sweep_grid() {
  return {{OptimizerKind::Adagrad, 0.01}, {OptimizerKind::Adagrad, 0.001},
          {OptimizerKind::Adagrad, 0.0001}, {OptimizerKind::Adam, 0.01},
          {OptimizerKind::Adam, 0.001},   {OptimizerKind::Adam, 0.0001}};
}

}  // namespace milvad
