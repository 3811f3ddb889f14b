#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace cryoforge {

/** Shortest round-trip decimal rendering, independent of any locale. */
inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

/** Renders NaN as the empty string (CSV "not computed on this row"). */
inline std::string fmt_optional(double v) { return std::isnan(v) ? std::string() : fmt_double(v); }

}  // namespace cryoforge
