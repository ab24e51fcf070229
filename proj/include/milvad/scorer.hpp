#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "milvad/binary_io.hpp"
#include "milvad/error.hpp"
#include "milvad/matrix.hpp"

namespace milvad {

enum class Mode { Train, Eval };

/// Numerically stable logistic, clamped to the open interval (0,1) so a
/// saturated score can never tie the hinge at exactly 0 or 1.
inline double sigmoid(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(s, lo, hi);
}

/// The segment scoring function f(v): D -> 512 -> 32 -> 1 fully connected,
/// ReLU on the hidden layers, sigmoid output, inverted dropout after each
/// hidden activation in Train mode. Hidden sizes are configurable so tests
/// can gradient-check small instances exhaustively; defaults match the
/// shipped architecture and the checkpoint format.
struct ScoringNetwork {
  std::size_t input_dim = 0;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;
  double dropout_rate = 0.6;
  std::uint64_t rng_seed = 0;

  MatrixD w1;               // hidden1 x D
  std::vector<double> b1;   // hidden1
  MatrixD w2;               // hidden2 x hidden1
  std::vector<double> b2;   // hidden2
  std::vector<double> w3;   // hidden2 (single output row)
  double b3 = 0.0;

  std::mt19937_64 dropout_rng;

  std::size_t parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
  }
};

inline void validate_finite(const ScoringNetwork& net) {
  auto check = [](std::span<const double> v) {
    for (double x : v)
      if (!std::isfinite(x)) raise(Errc::NonFiniteValue, "network parameter is not finite");
  };
  check(net.w1.data());
  check(net.b1);
  check(net.w2.data());
  check(net.b2);
  check(net.w3);
  check({&net.b3, 1});
}

/// Glorot-uniform weights, zero biases, deterministic in (dim, seed).
inline ScoringNetwork init_network(std::size_t dim, double dropout_rate,
                                   std::uint64_t seed, std::size_t hidden1 = 512,
                                   std::size_t hidden2 = 32) {
  if (dim == 0) raise(Errc::DimensionMismatch, "input dim must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    raise(Errc::ConfigError, "dropout rate must be in [0,1)");
  ScoringNetwork net;
  net.input_dim = dim;
  net.hidden1 = hidden1;
  net.hidden2 = hidden2;
  net.dropout_rate = dropout_rate;
  net.rng_seed = seed;
  net.w1 = MatrixD(hidden1, dim);
  net.b1.assign(hidden1, 0.0);
  net.w2 = MatrixD(hidden2, hidden1);
  net.b2.assign(hidden2, 0.0);
  net.w3.assign(hidden2, 0.0);
  net.b3 = 0.0;

  std::mt19937_64 rng(seed);
  auto fill_uniform = [&rng](std::span<double> dst, std::size_t fan_in,
                             std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : dst) w = u(rng);
  };
  fill_uniform(net.w1.data(), dim, hidden1);
  fill_uniform(net.w2.data(), hidden1, hidden2);
  fill_uniform(net.w3, hidden2, 1);

  net.dropout_rng.seed(seed + 0x9E3779B97F4A7C15ULL);  // derived dropout stream
  return net;
}

struct ForwardTrace {
  std::vector<double> input;        // D
  std::vector<double> z1, a1;       // hidden1 pre-activation / post-dropout
  std::vector<double> z2, a2;       // hidden2
  double z3 = 0.0;
  double score = 0.0;
  std::vector<double> mask1, mask2; // {0, 1/(1-p)}; all ones in Eval mode
};

namespace detail {

inline void draw_dropout_mask(std::vector<double>& mask, std::size_t n, double p,
                              std::mt19937_64& rng) {
  mask.resize(n);
  if (p <= 0.0) {
    std::fill(mask.begin(), mask.end(), 1.0);
    return;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution drop(p);
  for (double& m : mask) m = drop(rng) ? 0.0 : keep_scale;
}

// y = W x + b, then ReLU and the dropout mask, all in one pass per row.
inline void dense_relu_dropout(const MatrixD& w, std::span<const double> b,
                               std::span<const double> x,
                               std::span<const double> mask,
                               std::span<double> z, std::span<double> a) {
  const std::size_t rows = w.rows(), cols = w.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data().data() + r * cols;
    double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    z[r] = acc;
    a[r] = (acc > 0.0 ? acc : 0.0) * mask[r];
  }
}

template <typename Src>
inline void run_forward(const ScoringNetwork& net, std::span<const Src> x,
                        ForwardTrace& trace) {
  trace.input.assign(x.begin(), x.end());
  trace.z1.resize(net.hidden1);
  trace.a1.resize(net.hidden1);
  trace.z2.resize(net.hidden2);
  trace.a2.resize(net.hidden2);
  dense_relu_dropout(net.w1, net.b1, trace.input, trace.mask1, trace.z1, trace.a1);
  dense_relu_dropout(net.w2, net.b2, trace.a1, trace.mask2, trace.z2, trace.a2);
  double acc = net.b3;
  for (std::size_t c = 0; c < net.hidden2; ++c) acc += net.w3[c] * trace.a2[c];
  trace.z3 = acc;
  trace.score = sigmoid(acc);
}

inline void set_eval_masks(const ScoringNetwork& net, ForwardTrace& trace) {
  trace.mask1.assign(net.hidden1, 1.0);
  trace.mask2.assign(net.hidden2, 1.0);
}

}  // namespace detail

/// Scores one segment. Train mode draws fresh dropout masks from the
/// network's stream; Eval mode is deterministic.
template <typename Src>
inline double forward(ScoringNetwork& net, std::span<const Src> segment, Mode mode,
                      ForwardTrace& trace) {
  if (segment.size() != net.input_dim)
    raise(Errc::DimensionMismatch, "segment length " + std::to_string(segment.size()) +
                                       " != input dim " + std::to_string(net.input_dim));
  if (mode == Mode::Train) {
    detail::draw_dropout_mask(trace.mask1, net.hidden1, net.dropout_rate, net.dropout_rng);
    detail::draw_dropout_mask(trace.mask2, net.hidden2, net.dropout_rate, net.dropout_rng);
  } else {
    detail::set_eval_masks(net, trace);
  }
  detail::run_forward(net, segment, trace);
  return trace.score;
}

inline double forward(ScoringNetwork& net, std::span<const double> segment, Mode mode) {
  ForwardTrace trace;
  return forward(net, segment, mode, trace);
}

/// Scores every row of a bag. In Train mode one dropout mask per layer is
/// drawn for the whole bag and shared by all segments, which keeps the
/// bag-max subgradient consistent within the bag.
inline std::vector<double> forward_bag(ScoringNetwork& net, const MatrixF& segments,
                                       Mode mode, std::vector<ForwardTrace>& traces) {
  if (segments.cols() != net.input_dim)
    raise(Errc::DimensionMismatch, "bag dim " + std::to_string(segments.cols()) +
                                       " != input dim " + std::to_string(net.input_dim));
  std::vector<double> mask1, mask2;
  if (mode == Mode::Train) {
    detail::draw_dropout_mask(mask1, net.hidden1, net.dropout_rate, net.dropout_rng);
    detail::draw_dropout_mask(mask2, net.hidden2, net.dropout_rate, net.dropout_rng);
  } else {
    mask1.assign(net.hidden1, 1.0);
    mask2.assign(net.hidden2, 1.0);
  }
  traces.resize(segments.rows());
  std::vector<double> scores(segments.rows());
  for (std::size_t i = 0; i < segments.rows(); ++i) {
    traces[i].mask1 = mask1;
    traces[i].mask2 = mask2;
    detail::run_forward<float>(net, segments.row(i), traces[i]);
    scores[i] = traces[i].score;
  }
  return scores;
}

inline std::vector<double> forward_bag(ScoringNetwork& net, const MatrixF& segments,
                                       Mode mode) {
  std::vector<ForwardTrace> traces;
  return forward_bag(net, segments, mode, traces);
}

/// Inference-only scoring; never touches the dropout stream.
inline std::vector<double> score_bag(const ScoringNetwork& net, const MatrixF& segments) {
  if (segments.cols() != net.input_dim)
    raise(Errc::DimensionMismatch, "bag dim " + std::to_string(segments.cols()) +
                                       " != input dim " + std::to_string(net.input_dim));
  ForwardTrace trace;
  detail::set_eval_masks(net, trace);
  std::vector<double> scores(segments.rows());
  for (std::size_t i = 0; i < segments.rows(); ++i) {
    detail::run_forward<float>(net, segments.row(i), trace);
    scores[i] = trace.score;
  }
  return scores;
}

struct Gradients {
  MatrixD w1;
  std::vector<double> b1;
  MatrixD w2;
  std::vector<double> b2;
  std::vector<double> w3;
  double b3 = 0.0;

  static Gradients like(const ScoringNetwork& net) {
    Gradients g;
    g.w1 = MatrixD(net.hidden1, net.input_dim);
    g.b1.assign(net.hidden1, 0.0);
    g.w2 = MatrixD(net.hidden2, net.hidden1);
    g.b2.assign(net.hidden2, 0.0);
    g.w3.assign(net.hidden2, 0.0);
    g.b3 = 0.0;
    return g;
  }

  void zero() {
    w1.fill(0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    w2.fill(0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
    std::fill(w3.begin(), w3.end(), 0.0);
    b3 = 0.0;
  }
};

/// Accumulates parameter gradients for one scored segment into `acc`,
/// reusing the exact dropout masks recorded in the trace.
inline void backward_accumulate(const ScoringNetwork& net, const ForwardTrace& trace,
                                double d_loss_d_score, Gradients& acc,
                                std::vector<double>& scratch1,
                                std::vector<double>& scratch2) {
  if (trace.input.size() != net.input_dim || trace.z1.size() != net.hidden1 ||
      trace.z2.size() != net.hidden2 || trace.mask1.size() != net.hidden1 ||
      trace.mask2.size() != net.hidden2)
    raise(Errc::TraceMismatch, "trace shape does not match network");
  if (d_loss_d_score == 0.0) return;

  const double dz3 = d_loss_d_score * trace.score * (1.0 - trace.score);
  acc.b3 += dz3;
  for (std::size_t c = 0; c < net.hidden2; ++c) acc.w3[c] += dz3 * trace.a2[c];

  // dz2 = (w3 * dz3) . mask2 . relu'(z2)
  scratch2.resize(net.hidden2);
  for (std::size_t r = 0; r < net.hidden2; ++r) {
    const double da2 = dz3 * net.w3[r];
    scratch2[r] = (trace.z2[r] > 0.0) ? da2 * trace.mask2[r] : 0.0;
  }
  for (std::size_t r = 0; r < net.hidden2; ++r) {
    const double dz2 = scratch2[r];
    if (dz2 == 0.0) continue;
    acc.b2[r] += dz2;
    double* gw2 = acc.w2.data().data() + r * net.hidden1;
    for (std::size_t c = 0; c < net.hidden1; ++c) gw2[c] += dz2 * trace.a1[c];
  }

  // da1 = W2^T dz2
  scratch1.assign(net.hidden1, 0.0);
  for (std::size_t r = 0; r < net.hidden2; ++r) {
    const double dz2 = scratch2[r];
    if (dz2 == 0.0) continue;
    const double* w2r = net.w2.data().data() + r * net.hidden1;
    for (std::size_t c = 0; c < net.hidden1; ++c) scratch1[c] += dz2 * w2r[c];
  }
  for (std::size_t r = 0; r < net.hidden1; ++r) {
    const double dz1 = (trace.z1[r] > 0.0) ? scratch1[r] * trace.mask1[r] : 0.0;
    if (dz1 == 0.0) continue;
    acc.b1[r] += dz1;
    double* gw1 = acc.w1.data().data() + r * net.input_dim;
    for (std::size_t c = 0; c < net.input_dim; ++c) gw1[c] += dz1 * trace.input[c];
  }
}

inline Gradients backward(const ScoringNetwork& net, const ForwardTrace& trace,
                          double d_loss_d_score) {
  Gradients g = Gradients::like(net);
  std::vector<double> s1, s2;
  backward_accumulate(net, trace, d_loss_d_score, g, s1, s2);
  return g;
}

// Checkpoint layout: "VMC1", u32 D, f32 dropout rate, then W1 b1 W2 b2 W3 b3
// as f32 row-major, all little-endian.
inline constexpr char kCheckpointMagic[4] = {'V', 'M', 'C', '1'};

inline void save_checkpoint(const ScoringNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, 4);
  detail::put_u32le(out, static_cast<std::uint32_t>(net.input_dim));
  detail::put_f32le(out, static_cast<float>(net.dropout_rate));
  auto dump = [&out](std::span<const double> v) {
    for (double x : v) detail::put_f32le(out, static_cast<float>(x));
  };
  dump(net.w1.data());
  dump(net.b1);
  dump(net.w2.data());
  dump(net.b2);
  dump(net.w3);
  dump({&net.b3, 1});
  out.flush();
  if (!out) raise(Errc::IoFailure, "write failed for " + path.string());
}

inline ScoringNetwork load_checkpoint(const std::filesystem::path& path,
                                      std::size_t hidden1 = 512,
                                      std::size_t hidden2 = 32) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoFailure, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    raise(Errc::BadMagic, "bad magic in " + path.string());
  std::uint32_t dim = 0;
  float dropout = 0.f;
  if (!detail::get_u32le(in, dim) || !detail::get_f32le(in, dropout))
    raise(Errc::TruncatedPayload, "truncated header in " + path.string());
  if (dim == 0) raise(Errc::DimensionMismatch, "zero input dim in " + path.string());

  ScoringNetwork net = init_network(dim, dropout, 0, hidden1, hidden2);
  auto slurp = [&in, &path](std::span<double> v) {
    for (double& x : v) {
      float f = 0.f;
      if (!detail::get_f32le(in, f))
        raise(Errc::TruncatedPayload, "checkpoint shorter than architecture needs: " +
                                          path.string());
      x = f;
    }
  };
  slurp(net.w1.data());
  slurp(net.b1);
  slurp(net.w2.data());
  slurp(net.b2);
  slurp(net.w3);
  slurp({&net.b3, 1});
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0)
    raise(Errc::TruncatedPayload, "checkpoint longer than architecture needs: " +
                                      path.string());
  validate_finite(net);
  return net;
}

}  // namespace milvad
