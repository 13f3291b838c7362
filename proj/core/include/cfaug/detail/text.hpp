#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cfaug/error.hpp"

namespace cfaug::detail {

// First line of a sealed label store; the plain dataset loader refuses any
// file that starts with it.
inline constexpr std::string_view kVaultSentinel = "# cfaug-vault oracle-only";

// Shortest decimal form that parses back to the identical double, so text
// round-trips are bit-exact.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(context + ": cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

inline std::int64_t parse_int64(std::string_view text, const std::string& context) {
  std::int64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(context + ": cannot parse '" + std::string(text) + "' as an integer");
  }
  return value;
}

inline std::uint64_t parse_uint64(std::string_view text, const std::string& context) {
  std::uint64_t value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(context + ": cannot parse '" + std::string(text) +
                "' as an unsigned integer");
  }
  return value;
}

inline std::vector<std::string> split_line(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      break;
    }
    fields.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Strips a trailing carriage return so files written on other platforms load.
inline void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace cfaug::detail
