#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trajnet::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

std::optional<double> parse_double(std::string_view s);
std::optional<std::uint64_t> parse_uint(std::string_view s);
/// Accepts true/false, on/off, yes/no, 1/0.
std::optional<bool> parse_bool(std::string_view s);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
inline std::string format_bool(bool b) { return b ? "true" : "false"; }

}  // namespace trajnet::text
