#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "milvad/error.hpp"
#include "milvad/feature_tensor.hpp"

namespace milvad {

enum class Label { Normal, Abnormal };
enum class Split { Train, Test };

/// Half-open frame interval [begin, end).
struct FrameSpan {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  bool operator==(const FrameSpan&) const = default;
};

struct ManifestEntry {
  std::string feature_path;  // stem; stream files are <stem>.rgb.vfe / <stem>.flow.vfe
  Label label = Label::Normal;
  std::uint32_t num_frames = 0;
  std::vector<FrameSpan> anomaly_spans;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Split split = Split::Train;
};

namespace detail {

inline std::uint32_t parse_u32(std::string_view s, const std::string& context) {
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    raise(Errc::ManifestError, "bad integer '" + std::string(s) + "' in " + context);
  return v;
}

inline std::vector<FrameSpan> parse_spans(std::string_view field,
                                          const std::string& context) {
  std::vector<FrameSpan> spans;
  while (!field.empty()) {
    auto semi = field.find(';');
    std::string_view one = field.substr(0, semi);
    field = (semi == std::string_view::npos) ? std::string_view{}
                                             : field.substr(semi + 1);
    auto dash = one.find('-');
    if (dash == std::string_view::npos)
      raise(Errc::ManifestError, "span '" + std::string(one) + "' lacks '-' in " + context);
    spans.push_back({parse_u32(one.substr(0, dash), context),
                     parse_u32(one.substr(dash + 1), context)});
  }
  return spans;
}

}  // namespace detail

inline void validate_entry(const ManifestEntry& e, Split split) {
  if (e.feature_path.empty())
    raise(Errc::ManifestError, "empty feature path");
  if (e.num_frames == 0)
    raise(Errc::ManifestError, e.feature_path + ": num_frames must be positive");
  if (split == Split::Train && !e.anomaly_spans.empty())
    raise(Errc::ManifestError,
          e.feature_path + ": train entries carry video-level labels only, no spans");
  if (e.label == Label::Normal && !e.anomaly_spans.empty())
    raise(Errc::ManifestError, e.feature_path + ": normal video cannot have anomaly spans");
  for (const auto& s : e.anomaly_spans)
    if (s.begin >= s.end || s.end > e.num_frames)
      raise(Errc::ManifestError,
            e.feature_path + ": span [" + std::to_string(s.begin) + "," +
                std::to_string(s.end) + ") violates 0 <= start < end <= " +
                std::to_string(e.num_frames));
}

/// One video per line: `feature_path,label{normal|abnormal},num_frames,spans`
/// where spans is `s1-e1;s2-e2;...` or empty.
inline DatasetManifest load_manifest(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) raise(Errc::IoFailure, "cannot open manifest " + path.string());
  DatasetManifest m;
  m.split = split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string context = path.string() + ":" + std::to_string(lineno);

    std::string_view rest = line;
    std::string fields[4];
    for (int i = 0; i < 3; ++i) {
      auto comma = rest.find(',');
      if (comma == std::string_view::npos)
        raise(Errc::ManifestError, "expected 4 comma-separated fields in " + context);
      fields[i] = std::string(rest.substr(0, comma));
      rest = rest.substr(comma + 1);
    }
    if (rest.find(',') != std::string_view::npos)
      raise(Errc::ManifestError, "too many fields in " + context);
    fields[3] = std::string(rest);

    ManifestEntry e;
    e.feature_path = fields[0];
    if (fields[1] == "normal") e.label = Label::Normal;
    else if (fields[1] == "abnormal") e.label = Label::Abnormal;
    else raise(Errc::ManifestError, "label must be normal|abnormal in " + context);
    e.num_frames = detail::parse_u32(fields[2], context);
    e.anomaly_spans = detail::parse_spans(fields[3], context);
    validate_entry(e, split);
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open manifest " + path.string() + " for writing");
  for (const auto& e : m.entries) {
    out << e.feature_path << ','
        << (e.label == Label::Normal ? "normal" : "abnormal") << ','
        << e.num_frames << ',';
    for (std::size_t i = 0; i < e.anomaly_spans.size(); ++i) {
      if (i) out << ';';
      out << e.anomaly_spans[i].begin << '-' << e.anomaly_spans[i].end;
    }
    out << '\n';
  }
  if (!out) raise(Errc::IoFailure, "write failed for manifest " + path.string());
}

inline std::filesystem::path stream_file_path(const std::filesystem::path& base_dir,
                                              const std::string& stem, Stream stream) {
  return base_dir / (stem + "." + to_string(stream) + ".vfe");
}

/// Checks that every referenced stream file for `mode` exists.
inline void validate_manifest_files(const DatasetManifest& m,
                                    const std::filesystem::path& base_dir,
                                    Stream mode) {
  auto check = [&](const std::string& stem, Stream s) {
    auto p = stream_file_path(base_dir, stem, s);
    if (!std::filesystem::exists(p))
      raise(Errc::ManifestError, "referenced feature file missing: " + p.string());
  };
  for (const auto& e : m.entries) {
    if (mode == Stream::Fused) {
      check(e.feature_path, Stream::Rgb);
      check(e.feature_path, Stream::Flow);
    } else {
      check(e.feature_path, mode);
    }
  }
}

/// A whole video as a fixed-size set of segment instances plus its weak label.
struct Bag {
  std::string video_id;
  Label label = Label::Normal;
  MatrixF segments;  // N x D
  std::uint32_t num_frames = 0;
  std::vector<FrameSpan> anomaly_spans;
};

inline FeatureTensor load_stream_tensor(const ManifestEntry& entry,
                                        const std::filesystem::path& base_dir,
                                        Stream mode) {
  if (mode == Stream::Fused) {
    auto rgb = read_feature_file(stream_file_path(base_dir, entry.feature_path, Stream::Rgb));
    auto flow = read_feature_file(stream_file_path(base_dir, entry.feature_path, Stream::Flow));
    return fuse_streams(rgb, flow);
  }
  auto t = read_feature_file(stream_file_path(base_dir, entry.feature_path, mode));
  if (t.stream != mode)
    raise(Errc::StreamMismatch, entry.feature_path + ": file stream tag disagrees with mode");
  return t;
}

inline Bag build_bag(const ManifestEntry& entry, const std::filesystem::path& base_dir,
                     Stream mode, std::size_t n_segments = 32) {
  Bag bag;
  bag.video_id = std::filesystem::path(entry.feature_path).filename().string();
  bag.label = entry.label;
  bag.num_frames = entry.num_frames;
  bag.anomaly_spans = entry.anomaly_spans;
  bag.segments = segmentize(load_stream_tensor(entry, base_dir, mode), n_segments);
  return bag;
}

inline std::vector<Bag> build_bags(const DatasetManifest& m,
                                   const std::filesystem::path& base_dir, Stream mode,
                                   std::size_t n_segments = 32) {
  std::vector<Bag> bags;
  bags.reserve(m.entries.size());
  for (const auto& e : m.entries) bags.push_back(build_bag(e, base_dir, mode, n_segments));
  return bags;
}

}  // namespace milvad
