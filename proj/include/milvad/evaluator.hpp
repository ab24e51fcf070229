#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "milvad/csv.hpp"
#include "milvad/error.hpp"
#include "milvad/manifest.hpp"
#include "milvad/scorer.hpp"

namespace milvad {

/// Spread per-segment scores over the frames each segment covers:
/// segment i owns frames [floor(i*F/N), floor((i+1)*F/N)).
inline std::vector<double> expand_to_frames(std::span<const double> segment_scores,
                                            std::size_t num_frames) {
  const std::size_t n = segment_scores.size();
  if (n == 0) raise(Errc::EmptyBag, "no segment scores to expand");
  if (num_frames == 0) raise(Errc::ManifestError, "num_frames must be positive");
  std::vector<double> out(num_frames, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = i * num_frames / n;
    const std::size_t end = (i + 1) * num_frames / n;
    for (std::size_t f = begin; f < end; ++f) out[f] = segment_scores[i];
  }
  return out;
}

/// 1 for frames inside any annotated span, 0 elsewhere.
inline std::vector<std::uint8_t> frame_truth(std::size_t num_frames,
                                             std::span<const FrameSpan> spans) {
  std::vector<std::uint8_t> truth(num_frames, 0);
  for (const auto& s : spans) {
    if (s.begin >= s.end || s.end > num_frames)
      raise(Errc::ManifestError, "anomaly span out of range");
    std::fill(truth.begin() + static_cast<std::ptrdiff_t>(s.begin),
              truth.begin() + static_cast<std::ptrdiff_t>(s.end), 1);
  }
  return truth;
}

struct RocResult {
  std::vector<double> thresholds;  // thresholds[0] is +inf for the (0,0) point
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

/// ROC curve by descending threshold sweep with tied scores grouped into one
/// operating point, plus trapezoidal AUC. Requires both classes present.
inline RocResult roc_auc(std::span<const double> scores,
                         std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size())
    raise(Errc::LengthMismatch, "scores and truth differ in length");
  std::size_t total_pos = 0;
  for (std::uint8_t t : truth) total_pos += (t != 0);
  const std::size_t total_neg = truth.size() - total_pos;
  if (total_pos == 0 || total_neg == 0)
    raise(Errc::DegenerateLabels, "ROC needs both positive and negative frames");
  for (double s : scores)
    if (!std::isfinite(s)) raise(Errc::NonFiniteValue, "non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.thresholds.push_back(std::numeric_limits<double>::infinity());
  r.fpr.push_back(0.0);
  r.tpr.push_back(0.0);

  std::size_t tp = 0, fp = 0;
  double auc2 = 0.0;  // running twice-the-area in integer-exact counts
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = scores[order[i]];
    const std::size_t prev_tp = tp, prev_fp = fp;
    while (i < order.size() && scores[order[i]] == v) {
      if (truth[order[i]] != 0) ++tp; else ++fp;
      ++i;
    }
    auc2 += static_cast<double>(fp - prev_fp) * static_cast<double>(tp + prev_tp);
    r.thresholds.push_back(v);
    r.fpr.push_back(static_cast<double>(fp) / static_cast<double>(total_neg));
    r.tpr.push_back(static_cast<double>(tp) / static_cast<double>(total_pos));
  }
  r.auc = auc2 / (2.0 * static_cast<double>(total_pos) * static_cast<double>(total_neg));
  return r;
}

/// AUC by direct pair counting: ties between a positive and a negative score
/// contribute half a win.
inline double auc_pair_oracle(std::span<const double> scores,
                              std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size())
    raise(Errc::LengthMismatch, "scores and truth differ in length");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (truth[i] != 0 ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty())
    raise(Errc::DegenerateLabels, "AUC needs both positive and negative frames");
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

struct FrameScores {
  std::string video_id;
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
};

struct EvalResult {
  std::vector<FrameScores> videos;
  RocResult roc;
};

/// Score every bag in inference mode, expand segment scores to frames, and
/// pool all frames into one ROC.
inline EvalResult evaluate(const ScoringNetwork& net, std::span<const Bag> bags) {
  if (bags.empty()) raise(Errc::EmptyBatch, "no bags to evaluate");
  EvalResult result;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_truth;
  for (const auto& bag : bags) {
    FrameScores fs;
    fs.video_id = bag.video_id;
    const std::vector<double> seg = score_bag(net, bag.segments);
    fs.scores = expand_to_frames(seg, bag.num_frames);
    fs.truth = frame_truth(bag.num_frames, bag.anomaly_spans);
    pooled_scores.insert(pooled_scores.end(), fs.scores.begin(), fs.scores.end());
    pooled_truth.insert(pooled_truth.end(), fs.truth.begin(), fs.truth.end());
    result.videos.push_back(std::move(fs));
  }
  result.roc = roc_auc(pooled_scores, pooled_truth);
  return result;
}

inline void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string());
  out << "threshold,fpr,tpr\n";
  for (std::size_t i = 0; i < roc.thresholds.size(); ++i)
    out << detail::format_double(roc.thresholds[i]) << ','
        << detail::format_double(roc.fpr[i]) << ','
        << detail::format_double(roc.tpr[i]) << '\n';
  if (!out.flush()) raise(Errc::IoFailure, "write failed: " + path.string());
}

inline void write_frame_scores_csv(const std::filesystem::path& path,
                                   std::span<const FrameScores> videos) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string());
  out << "video_id,frame,score,truth\n";
  for (const auto& v : videos)
    for (std::size_t f = 0; f < v.scores.size(); ++f)
      out << v.video_id << ',' << f << ',' << detail::format_double(v.scores[f])
          << ',' << static_cast<int>(v.truth[f]) << '\n';
  if (!out.flush()) raise(Errc::IoFailure, "write failed: " + path.string());
}

}  // namespace milvad
