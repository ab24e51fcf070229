#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "milvad/binary_io.hpp"
#include "milvad/error.hpp"
#include "milvad/matrix.hpp"

namespace milvad {

enum class Stream : std::uint32_t { Rgb = 0, Flow = 1, Fused = 2 };

inline const char* to_string(Stream s) {
  switch (s) {
    case Stream::Rgb: return "rgb";
    case Stream::Flow: return "flow";
    case Stream::Fused: return "fused";
  }
  return "?";
}

/// Per-video clip-level feature matrix: T clips by D dims, row-major f32.
struct FeatureTensor {
  Stream stream = Stream::Rgb;
  std::size_t num_clips = 0;  // T
  std::size_t dim = 0;        // D
  MatrixF data;               // T x D

  bool operator==(const FeatureTensor&) const = default;
};

inline void validate(const FeatureTensor& t) {
  if (t.num_clips == 0 || t.dim == 0)
    raise(Errc::EmptyTensor, "feature tensor has zero clips or zero dims");
  if (t.data.rows() != t.num_clips || t.data.cols() != t.dim)
    raise(Errc::DimensionMismatch, "feature tensor data shape disagrees with header");
  for (float v : t.data.data())
    if (!std::isfinite(v))
      raise(Errc::NonFiniteValue, "feature tensor contains NaN or Inf");
}

// Container layout: "VFE1", u32 stream code, u32 T, u32 D, then T*D f32,
// everything little-endian. Total size must be exactly 16 + 4*T*D bytes.
inline constexpr char kFeatureMagic[4] = {'V', 'F', 'E', '1'};

inline FeatureTensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::IoFailure, "cannot open " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFeatureMagic, 4) != 0)
    raise(Errc::BadMagic, "bad magic in " + path.string());

  std::uint32_t stream_code = 0, t = 0, d = 0;
  if (!detail::get_u32le(in, stream_code) || !detail::get_u32le(in, t) ||
      !detail::get_u32le(in, d))
    raise(Errc::TruncatedPayload, "truncated header in " + path.string());
  if (stream_code > 2)
    raise(Errc::BadMagic, "unknown stream code in " + path.string());
  if (t == 0 || d == 0)
    raise(Errc::EmptyTensor, "zero-sized tensor in " + path.string());

  FeatureTensor out;
  out.stream = static_cast<Stream>(stream_code);
  out.num_clips = t;
  out.dim = d;
  out.data = MatrixF(t, d);
  for (float& v : out.data.data()) {
    if (!detail::get_f32le(in, v))
      raise(Errc::TruncatedPayload, "payload shorter than header promises in " +
                                        path.string());
  }
  // Reject trailing bytes: the format is exactly 16 + 4*T*D bytes.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0)
    raise(Errc::TruncatedPayload, "payload longer than header promises in " +
                                      path.string());
  for (float v : out.data.data())
    if (!std::isfinite(v))
      raise(Errc::NonFiniteValue, "non-finite value in " + path.string());
  return out;
}

inline void write_feature_file(const FeatureTensor& tensor,
                               const std::filesystem::path& path) {
  validate(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Errc::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(kFeatureMagic, 4);
  detail::put_u32le(out, static_cast<std::uint32_t>(tensor.stream));
  detail::put_u32le(out, static_cast<std::uint32_t>(tensor.num_clips));
  detail::put_u32le(out, static_cast<std::uint32_t>(tensor.dim));
  for (float v : tensor.data.data()) detail::put_f32le(out, v);
  out.flush();
  if (!out) raise(Errc::IoFailure, "write failed for " + path.string());
}

/// Late fusion: row t of the result is rgb row t followed by flow row t.
inline FeatureTensor fuse_streams(const FeatureTensor& rgb,
                                  const FeatureTensor& flow) {
  if (rgb.stream != Stream::Rgb || flow.stream != Stream::Flow)
    raise(Errc::StreamMismatch, "fuse_streams expects an RGB and a Flow tensor");
  if (rgb.num_clips != flow.num_clips)
    raise(Errc::ClipCountMismatch,
          "clip counts differ: rgb T=" + std::to_string(rgb.num_clips) +
              ", flow T=" + std::to_string(flow.num_clips));
  FeatureTensor fused;
  fused.stream = Stream::Fused;
  fused.num_clips = rgb.num_clips;
  fused.dim = rgb.dim + flow.dim;
  fused.data = MatrixF(fused.num_clips, fused.dim);
  for (std::size_t t = 0; t < fused.num_clips; ++t) {
    auto dst = fused.data.row(t);
    auto r = rgb.data.row(t);
    auto f = flow.data.row(t);
    std::copy(r.begin(), r.end(), dst.begin());
    std::copy(f.begin(), f.end(), dst.begin() + static_cast<std::ptrdiff_t>(rgb.dim));
  }
  return fused;
}

/// Pools T clip rows into n_segments rows.
///
/// T >= N: segment i is the mean of clips [floor(i*T/N), floor((i+1)*T/N)).
/// T <  N: segment i is the single clip floor(i*T/N) (replication).
inline MatrixF segmentize(const FeatureTensor& tensor, std::size_t n_segments) {
  if (tensor.num_clips == 0)
    raise(Errc::EmptyTensor, "cannot segmentize an empty tensor");
  const std::size_t t_clips = tensor.num_clips;
  const std::size_t d = tensor.dim;
  MatrixF out(n_segments, d);
  for (std::size_t i = 0; i < n_segments; ++i) {
    const std::size_t begin = i * t_clips / n_segments;
    std::size_t end = (i + 1) * t_clips / n_segments;
    if (end <= begin) end = begin + 1;
    auto dst = out.row(i);
    double inv = 1.0 / static_cast<double>(end - begin);
    for (std::size_t c = 0; c < d; ++c) {
      double acc = 0.0;
      for (std::size_t r = begin; r < end; ++r) acc += tensor.data(r, c);
      dst[c] = static_cast<float>(acc * inv);
    }
  }
  return out;
}

}  // namespace milvad
