#pragma once

#include <charconv>
#include <optional>
#include <string>

namespace hrsae::detail {

/// Shortest round-trip decimal form; identical bits give identical text.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

}  // namespace hrsae::detail
