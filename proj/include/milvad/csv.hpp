#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace milvad::detail {

/// Compact, locale-independent number formatting for CSV output.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace milvad::detail
