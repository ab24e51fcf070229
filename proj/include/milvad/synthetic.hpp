#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "milvad/error.hpp"
#include "milvad/evaluator.hpp"
#include "milvad/feature_tensor.hpp"
#include "milvad/manifest.hpp"
#include "milvad/scorer.hpp"

namespace milvad {

inline constexpr std::size_t kFramesPerClip = 16;

/// Synthetic dataset: per-clip Gaussian features, one planted mean-shift
/// direction for anomalous clips. Counts are per split.
struct SynthSpec {
  std::size_t num_normal = 40;
  std::size_t num_abnormal = 40;
  std::size_t num_normal_test = 10;
  std::size_t num_abnormal_test = 10;
  std::size_t dim = 0;  // per-stream feature width; must be set
  std::size_t clips_min = 48;
  std::size_t clips_max = 96;
  double separability = 4.0;     // norm of the anomalous mean shift, per stream
  double anomaly_fraction = 0.3; // fraction of clips anomalous in abnormal videos
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

inline void validate(const SynthSpec& spec) {
  if (spec.dim == 0) raise(Errc::ConfigError, "dim must be positive");
  if (spec.num_normal == 0 || spec.num_abnormal == 0 ||
      spec.num_normal_test == 0 || spec.num_abnormal_test == 0)
    raise(Errc::ConfigError, "video counts must be positive");
  if (spec.clips_min == 0 || spec.clips_min > spec.clips_max)
    raise(Errc::ConfigError, "bad clips range");
  if (spec.separability < 0.0)
    raise(Errc::ConfigError, "separability must be >= 0");
  if (!(spec.anomaly_fraction > 0.0) || spec.anomaly_fraction > 1.0)
    raise(Errc::ConfigError, "anomaly_fraction must be in (0,1]");
  if (!(spec.noise_sigma > 0.0))
    raise(Errc::ConfigError, "noise_sigma must be > 0");
}

namespace detail {

inline std::mt19937_64 video_rng(std::uint64_t seed, std::uint32_t split_tag,
                                 std::uint32_t label_tag, std::uint32_t index) {
  std::seed_seq ss{static_cast<std::uint32_t>(seed),
                   static_cast<std::uint32_t>(seed >> 32), split_tag, label_tag,
                   index};
  return std::mt19937_64(ss);
}

struct SynthVideo {
  std::string stem;
  FeatureTensor rgb;
  FeatureTensor flow;
  ManifestEntry entry;
};

inline SynthVideo make_video(const SynthSpec& spec, Split split, Label label,
                             std::uint32_t index) {
  auto rng = video_rng(spec.seed, split == Split::Train ? 0u : 1u,
                       label == Label::Normal ? 0u : 1u, index);
  std::uniform_int_distribution<std::size_t> clips_dist(spec.clips_min, spec.clips_max);
  const std::size_t t_clips = clips_dist(rng);

  std::size_t anom_begin = 0, anom_end = 0;  // half-open clip range
  if (label == Label::Abnormal) {
    auto len = static_cast<std::size_t>(
        std::llround(spec.anomaly_fraction * static_cast<double>(t_clips)));
    len = std::clamp<std::size_t>(len, 1, t_clips);
    std::uniform_int_distribution<std::size_t> start_dist(0, t_clips - len);
    anom_begin = start_dist(rng);
    anom_end = anom_begin + len;
  }

  const double shift = spec.separability / std::sqrt(static_cast<double>(spec.dim));
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  auto fill_stream = [&](Stream s) {
    FeatureTensor t;
    t.stream = s;
    t.num_clips = t_clips;
    t.dim = spec.dim;
    t.data = MatrixF(t_clips, spec.dim);
    for (std::size_t c = 0; c < t_clips; ++c) {
      const double mu = (c >= anom_begin && c < anom_end) ? shift : 0.0;
      for (std::size_t d = 0; d < spec.dim; ++d)
        t.data(c, d) = static_cast<float>(mu + noise(rng));
    }
    return t;
  };

  SynthVideo v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%s_%04u",
                split == Split::Train ? "train" : "test",
                label == Label::Normal ? "normal" : "abnormal", index);
  v.stem = buf;
  v.rgb = fill_stream(Stream::Rgb);
  v.flow = fill_stream(Stream::Flow);

  v.entry.feature_path = v.stem;
  v.entry.label = label;
  v.entry.num_frames = static_cast<std::uint32_t>(t_clips * kFramesPerClip);
  if (label == Label::Abnormal && split == Split::Test)
    v.entry.anomaly_spans.push_back(
        {static_cast<std::uint32_t>(anom_begin * kFramesPerClip),
         static_cast<std::uint32_t>(anom_end * kFramesPerClip)});
  return v;
}

}  // namespace detail

struct GenResult {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

/// Writes per-stream feature files plus train/test manifests into out_dir.
/// Train entries keep only the video-level label; test entries carry the true
/// frame spans of the planted anomalous clip range.
inline GenResult generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  validate(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    raise(Errc::IoFailure, "cannot create output directory " + out_dir.string());

  auto emit_split = [&](Split split, std::size_t n_normal, std::size_t n_abnormal) {
    DatasetManifest m;
    m.split = split;
    auto emit = [&](Label label, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        auto v = detail::make_video(spec, split, label, static_cast<std::uint32_t>(i));
        write_feature_file(v.rgb, stream_file_path(out_dir, v.stem, Stream::Rgb));
        write_feature_file(v.flow, stream_file_path(out_dir, v.stem, Stream::Flow));
        m.entries.push_back(std::move(v.entry));
      }
    };
    emit(Label::Normal, n_normal);
    emit(Label::Abnormal, n_abnormal);
    return m;
  };

  GenResult r;
  r.train_manifest = out_dir / "train.csv";
  r.test_manifest = out_dir / "test.csv";
  save_manifest(emit_split(Split::Train, spec.num_normal, spec.num_abnormal),
                r.train_manifest);
  save_manifest(emit_split(Split::Test, spec.num_normal_test, spec.num_abnormal_test),
                r.test_manifest);
  return r;
}

/// The planted shift as seen by a given stream mode. Each stream carries the
/// full per-stream shift, so fusion increases the effective norm by sqrt(2).
inline double oracle_shift_norm(const SynthSpec& spec, Stream mode) {
  return mode == Stream::Fused ? spec.separability * std::sqrt(2.0)
                               : spec.separability;
}

/// Reference scorer with test-only knowledge of the planted direction:
/// projects each segment onto it and squashes the centered projection.
inline std::vector<double> oracle_segment_scores(const SynthSpec& spec, Stream mode,
                                                 const MatrixF& segments) {
  const std::size_t d_eff = spec.dim * (mode == Stream::Fused ? 2 : 1);
  if (segments.cols() != d_eff)
    raise(Errc::DimensionMismatch, "segment width does not match spec dim");
  const double unit = 1.0 / std::sqrt(static_cast<double>(d_eff));
  const double center = oracle_shift_norm(spec, mode) / 2.0;
  std::vector<double> scores(segments.rows());
  for (std::size_t i = 0; i < segments.rows(); ++i) {
    double proj = 0.0;
    for (std::size_t d = 0; d < d_eff; ++d) proj += unit * segments(i, d);
    scores[i] = sigmoid((proj - center) / spec.noise_sigma);
  }
  return scores;
}

/// Frame-level evaluation of the oracle scorer over a set of bags.
inline EvalResult oracle_evaluate(const SynthSpec& spec, Stream mode,
                                  std::span<const Bag> bags) {
  if (bags.empty()) raise(Errc::EmptyBatch, "no bags to evaluate");
  EvalResult result;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_truth;
  for (const auto& bag : bags) {
    FrameScores fs;
    fs.video_id = bag.video_id;
    const auto seg = oracle_segment_scores(spec, mode, bag.segments);
    fs.scores = expand_to_frames(seg, bag.num_frames);
    fs.truth = frame_truth(bag.num_frames, bag.anomaly_spans);
    pooled_scores.insert(pooled_scores.end(), fs.scores.begin(), fs.scores.end());
    pooled_truth.insert(pooled_truth.end(), fs.truth.begin(), fs.truth.end());
    result.videos.push_back(std::move(fs));
  }
  result.roc = roc_auc(pooled_scores, pooled_truth);
  return result;
}

}  // namespace milvad
