#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "milvad/binary_io.hpp"
#include "milvad/csv.hpp"
#include "milvad/error.hpp"
#include "milvad/manifest.hpp"
#include "milvad/mil_loss.hpp"
#include "milvad/optimizer.hpp"
#include "milvad/scorer.hpp"

namespace milvad {

struct TrainConfig {
  std::size_t batch_pairs = 30;
  std::size_t iterations = 3000;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  OptimizerConfig optimizer;
  double dropout_rate = 0.6;
  double weight_decay = 0.0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  Stream stream_mode = Stream::Fused;
  std::size_t n_segments = 32;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.batch_pairs == 0) raise(Errc::ConfigError, "batch_pairs must be positive");
  if (cfg.n_segments == 0) raise(Errc::ConfigError, "segments must be positive");
  if (cfg.hidden1 == 0 || cfg.hidden2 == 0)
    raise(Errc::ConfigError, "hidden sizes must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0))
    raise(Errc::ConfigError, "dropout must be in [0,1)");
  if (!(cfg.optimizer.learning_rate > 0.0))
    raise(Errc::ConfigError, "learning rate must be positive");
  if (cfg.weight_decay < 0.0) raise(Errc::ConfigError, "weight decay must be >= 0");
  validate(cfg.objective);
}

struct LossRecord {
  std::uint64_t iteration = 0;
  double total = 0.0;
  double hinge = 0.0;
  double sparsity = 0.0;
  double smoothness = 0.0;
  double ms = 0.0;
};

struct TrainLog {
  std::vector<LossRecord> records;
};

inline void write_loss_csv(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string());
  out << "iteration,total,hinge,sparsity,smoothness,ms\n";
  for (const auto& r : log.records)
    out << r.iteration << ',' << detail::format_double(r.total) << ','
        << detail::format_double(r.hinge) << ','
        << detail::format_double(r.sparsity) << ','
        << detail::format_double(r.smoothness) << ','
        << detail::format_double(r.ms) << '\n';
  if (!out.flush()) raise(Errc::IoFailure, "write failed: " + path.string());
}

struct BagPairSample {
  const Bag* abnormal = nullptr;
  const Bag* normal = nullptr;
};

/// Draws batch_pairs abnormal and batch_pairs normal bags uniformly without
/// replacement (abnormal indices first) and pairs them index-wise.
inline std::vector<BagPairSample> sample_batch(std::span<const Bag> bags,
                                               std::size_t batch_pairs,
                                               std::mt19937_64& rng) {
  std::vector<std::size_t> abn, nor;
  for (std::size_t i = 0; i < bags.size(); ++i)
    (bags[i].label == Label::Abnormal ? abn : nor).push_back(i);
  if (abn.size() < batch_pairs || nor.size() < batch_pairs)
    raise(Errc::InsufficientBags,
          "need " + std::to_string(batch_pairs) + " bags per class, have " +
              std::to_string(abn.size()) + " abnormal / " + std::to_string(nor.size()) +
              " normal");
  auto draw = [&](std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < batch_pairs; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
      std::swap(idx[i], idx[d(rng)]);
    }
  };
  draw(abn);
  draw(nor);
  std::vector<BagPairSample> out(batch_pairs);
  for (std::size_t i = 0; i < batch_pairs; ++i) out[i] = {&bags[abn[i]], &bags[nor[i]]};
  return out;
}

inline std::vector<std::size_t> param_slot_sizes(const ScoringNetwork& net) {
  return {net.w1.size(), net.b1.size(), net.w2.size(), net.b2.size(), net.w3.size(), 1};
}

inline std::array<std::span<double>, 6> param_slots(ScoringNetwork& net) {
  return {std::span<double>(net.w1.data()), std::span<double>(net.b1),
          std::span<double>(net.w2.data()), std::span<double>(net.b2),
          std::span<double>(net.w3), std::span<double>(&net.b3, 1)};
}

inline std::array<std::span<const double>, 6> grad_slots(const Gradients& g) {
  return {std::span<const double>(g.w1.data()), std::span<const double>(g.b1),
          std::span<const double>(g.w2.data()), std::span<const double>(g.b2),
          std::span<const double>(g.w3), std::span<const double>(&g.b3, 1)};
}

inline std::array<std::span<double>, 6> mutable_grad_slots(Gradients& g) {
  return {std::span<double>(g.w1.data()), std::span<double>(g.b1),
          std::span<double>(g.w2.data()), std::span<double>(g.b2),
          std::span<double>(g.w3), std::span<double>(&g.b3, 1)};
}

inline constexpr std::uint64_t kSamplerSeedSalt = 0xD1342543DE82EF95ULL;

/// Everything needed to continue a run: model, optimizer accumulators,
/// iteration counter, and both RNG streams.
struct TrainState {
  ScoringNetwork net;
  OptimizerState opt;
  std::mt19937_64 sampler_rng;
  std::uint64_t iteration = 0;

  TrainState(ScoringNetwork n, const OptimizerConfig& oc)
      : net(std::move(n)), opt(oc, param_slot_sizes(net)) {}
};

inline TrainState make_train_state(std::size_t input_dim, const TrainConfig& cfg,
                                   std::optional<ScoringNetwork> initial = {}) {
  validate(cfg);
  ScoringNetwork net =
      initial ? std::move(*initial)
              : init_network(input_dim, cfg.dropout_rate, cfg.seed, cfg.hidden1,
                             cfg.hidden2);
  if (net.input_dim != input_dim)
    raise(Errc::DimensionMismatch, "initial network dim " +
                                       std::to_string(net.input_dim) +
                                       " != data dim " + std::to_string(input_dim));
  TrainState st(std::move(net), cfg.optimizer);
  st.sampler_rng.seed(cfg.seed ^ kSamplerSeedSalt);
  return st;
}

using CheckpointSink = std::function<void(const ScoringNetwork&, std::uint64_t)>;

/// Runs `steps` iterations of sample, forward (train mode, one dropout mask
/// pair per bag), batch loss, backprop, optimizer step; appends one record per
/// iteration to `log`.
inline void train_steps(TrainState& st, std::span<const Bag> bags,
                        const TrainConfig& cfg, std::size_t steps, TrainLog& log,
                        const CheckpointSink& on_checkpoint = {}) {
  if (bags.empty()) raise(Errc::EmptyBatch, "no training bags");
  for (const auto& b : bags)
    if (b.segments.cols() != st.net.input_dim)
      raise(Errc::DimensionMismatch, b.video_id + ": segment dim " +
                                         std::to_string(b.segments.cols()) +
                                         " != network dim " +
                                         std::to_string(st.net.input_dim));

  Gradients acc = Gradients::like(st.net);
  std::vector<double> scratch1, scratch2;
  std::vector<std::vector<ForwardTrace>> pos_traces(cfg.batch_pairs);
  std::vector<std::vector<ForwardTrace>> neg_traces(cfg.batch_pairs);
  std::vector<std::vector<double>> pos_scores(cfg.batch_pairs);
  std::vector<std::vector<double>> neg_scores(cfg.batch_pairs);
  std::vector<std::pair<std::span<const double>, std::span<const double>>> score_pairs(
      cfg.batch_pairs);

  for (std::size_t s = 0; s < steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batch = sample_batch(bags, cfg.batch_pairs, st.sampler_rng);
    for (std::size_t p = 0; p < batch.size(); ++p) {
      pos_scores[p] =
          forward_bag(st.net, batch[p].abnormal->segments, Mode::Train, pos_traces[p]);
      neg_scores[p] =
          forward_bag(st.net, batch[p].normal->segments, Mode::Train, neg_traces[p]);
      score_pairs[p] = {pos_scores[p], neg_scores[p]};
    }

    BatchLoss bl;
    try {
      bl = batch_loss(score_pairs, cfg.objective);
    } catch (const Error& e) {
      if (e.code() == Errc::NonFiniteLoss)
        raise(Errc::NonFiniteLoss,
              "iteration " + std::to_string(st.iteration + 1) + ": " + e.what());
      throw;
    }

    acc.zero();
    for (std::size_t p = 0; p < batch.size(); ++p) {
      const auto& pl = bl.pairs[p];
      for (std::size_t i = 0; i < pl.grad_pos.size(); ++i)
        backward_accumulate(st.net, pos_traces[p][i], pl.grad_pos[i], acc, scratch1,
                            scratch2);
      for (std::size_t i = 0; i < pl.grad_neg.size(); ++i)
        backward_accumulate(st.net, neg_traces[p][i], pl.grad_neg[i], acc, scratch1,
                            scratch2);
    }

    if (cfg.weight_decay != 0.0) {
      const auto p = param_slots(st.net);
      const auto g = mutable_grad_slots(acc);
      for (std::size_t slot = 0; slot < p.size(); ++slot)
        for (std::size_t i = 0; i < p[slot].size(); ++i)
          g[slot][i] += cfg.weight_decay * p[slot][i];
    }

    const auto params = param_slots(st.net);
    const auto grads = grad_slots(acc);
    st.opt.apply_step(params, grads);
    ++st.iteration;

    const auto t1 = std::chrono::steady_clock::now();
    log.records.push_back({st.iteration, bl.mean_total, bl.mean_hinge, bl.mean_sparsity,
                           bl.mean_smoothness,
                           std::chrono::duration<double, std::milli>(t1 - t0).count()});
    if (on_checkpoint && cfg.checkpoint_every > 0 &&
        st.iteration % cfg.checkpoint_every == 0)
      on_checkpoint(st.net, st.iteration);
  }
}

struct TrainResult {
  ScoringNetwork net;
  TrainLog log;
};

inline TrainResult train(std::span<const Bag> bags, const TrainConfig& cfg,
                         std::optional<ScoringNetwork> initial = {},
                         const CheckpointSink& on_checkpoint = {}) {
  if (bags.empty()) raise(Errc::EmptyBatch, "no training bags");
  TrainState st = make_train_state(bags.front().segments.cols(), cfg, std::move(initial));
  TrainLog log;
  train_steps(st, bags, cfg, cfg.iterations, log, on_checkpoint);
  return {std::move(st.net), std::move(log)};
}

// Resumable run state: "VTS1", shapes, optimizer config and accumulators in
// f64, then both RNG streams in their textual form. Loading one and training k
// more steps matches an uninterrupted run exactly.
inline constexpr char kTrainStateMagic[4] = {'V', 'T', 'S', '1'};

inline void save_train_state(const TrainState& st, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(kTrainStateMagic, 4);
  detail::put_u32le(out, static_cast<std::uint32_t>(st.net.input_dim));
  detail::put_u32le(out, static_cast<std::uint32_t>(st.net.hidden1));
  detail::put_u32le(out, static_cast<std::uint32_t>(st.net.hidden2));
  detail::put_f64le(out, st.net.dropout_rate);
  detail::put_u64le(out, st.iteration);
  const auto& oc = st.opt.config();
  detail::put_u32le(out, oc.kind == OptimizerKind::Adagrad ? 0u : 1u);
  detail::put_f64le(out, oc.learning_rate);
  detail::put_f64le(out, oc.epsilon);
  detail::put_f64le(out, oc.beta1);
  detail::put_f64le(out, oc.beta2);
  detail::put_u64le(out, st.opt.step_count());

  auto dump = [&out](std::span<const double> v) {
    for (double x : v) detail::put_f64le(out, x);
  };
  dump(st.net.w1.data());
  dump(st.net.b1);
  dump(st.net.w2.data());
  dump(st.net.b2);
  dump(st.net.w3);
  dump({&st.net.b3, 1});
  for (std::size_t slot = 0; slot < st.opt.slot_count(); ++slot)
    dump(st.opt.accum_sq(slot));
  if (oc.kind == OptimizerKind::Adam)
    for (std::size_t slot = 0; slot < st.opt.slot_count(); ++slot)
      dump(st.opt.accum_m(slot));

  auto put_string = [&out](const std::string& s) {
    detail::put_u32le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  };
  std::ostringstream sampler;
  sampler << st.sampler_rng;
  put_string(sampler.str());
  std::ostringstream dropout;
  dropout << st.net.dropout_rng;
  put_string(dropout.str());
  if (!out.flush()) raise(Errc::IoFailure, "write failed: " + path.string());
}

inline TrainState load_train_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoFailure, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kTrainStateMagic, 4) != 0)
    raise(Errc::BadMagic, path.string() + ": not a train state file");

  auto need_u32 = [&](const char* what) {
    std::uint32_t v = 0;
    if (!detail::get_u32le(in, v))
      raise(Errc::TruncatedPayload, path.string() + ": truncated " + what);
    return v;
  };
  auto need_u64 = [&](const char* what) {
    std::uint64_t v = 0;
    if (!detail::get_u64le(in, v))
      raise(Errc::TruncatedPayload, path.string() + ": truncated " + what);
    return v;
  };
  auto need_f64 = [&](const char* what) {
    double v = 0;
    if (!detail::get_f64le(in, v))
      raise(Errc::TruncatedPayload, path.string() + ": truncated " + what);
    return v;
  };

  const std::size_t dim = need_u32("header");
  const std::size_t h1 = need_u32("header");
  const std::size_t h2 = need_u32("header");
  if (dim == 0 || h1 == 0 || h2 == 0)
    raise(Errc::DimensionMismatch, path.string() + ": zero dimension in header");
  const double dropout = need_f64("header");
  const std::uint64_t iteration = need_u64("header");

  OptimizerConfig oc;
  const std::uint32_t kind = need_u32("optimizer config");
  if (kind > 1) raise(Errc::ConfigError, path.string() + ": unknown optimizer kind");
  oc.kind = kind == 0 ? OptimizerKind::Adagrad : OptimizerKind::Adam;
  oc.learning_rate = need_f64("optimizer config");
  oc.epsilon = need_f64("optimizer config");
  oc.beta1 = need_f64("optimizer config");
  oc.beta2 = need_f64("optimizer config");
  const std::uint64_t step_count = need_u64("optimizer config");

  ScoringNetwork net;
  net.input_dim = dim;
  net.hidden1 = h1;
  net.hidden2 = h2;
  net.dropout_rate = dropout;
  net.w1 = MatrixD(h1, dim);
  net.b1.assign(h1, 0.0);
  net.w2 = MatrixD(h2, h1);
  net.b2.assign(h2, 0.0);
  net.w3.assign(h2, 0.0);

  TrainState st(std::move(net), oc);
  st.iteration = iteration;
  st.opt.set_step_count(step_count);

  auto fill = [&](std::span<double> v) {
    for (double& x : v)
      if (!detail::get_f64le(in, x))
        raise(Errc::TruncatedPayload, path.string() + ": truncated parameters");
  };
  for (auto slot : param_slots(st.net)) fill(slot);
  for (auto& buf : st.opt.accum_sq_buffers()) fill(buf);
  if (oc.kind == OptimizerKind::Adam)
    for (auto& buf : st.opt.accum_m_buffers()) fill(buf);

  auto get_string = [&](const char* what) {
    const std::uint32_t len = need_u32(what);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (in.gcount() != static_cast<std::streamsize>(len))
      raise(Errc::TruncatedPayload, path.string() + ": truncated " + std::string(what));
    return s;
  };
  std::istringstream sampler(get_string("sampler rng"));
  sampler >> st.sampler_rng;
  std::istringstream dropout_rng(get_string("dropout rng"));
  dropout_rng >> st.net.dropout_rng;
  if (sampler.fail() || dropout_rng.fail())
    raise(Errc::TruncatedPayload, path.string() + ": malformed rng stream");

  if (in.peek() != std::char_traits<char>::eof())
    raise(Errc::TruncatedPayload, path.string() + ": trailing bytes");
  validate_finite(st.net);
  return st;
}

}  // namespace milvad
