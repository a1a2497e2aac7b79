#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace finprint::text {

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

bool parse_int(std::string_view s, std::int64_t& out);
bool parse_double(std::string_view s, double& out);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace finprint::text
