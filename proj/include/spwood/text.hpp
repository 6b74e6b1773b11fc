#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace spwood::text {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

/// Full-token parse; nullopt-like failure reported through the bool.
bool parse_double(std::string_view token, double& out);
bool parse_int(std::string_view token, long long& out);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::vector<std::string_view> split(std::string_view line, char sep);
std::vector<std::string_view> lines(std::string_view body);

}  // namespace spwood::text
