#ifndef CRT_TEXT_HPP
#define CRT_TEXT_HPP

#include <string>
#include <string_view>
#include <vector>

namespace crt {

/// Shortest-safe lossless decimal form (17 significant digits).
std::string format_real(double value);

/// Parses a decimal produced by format_real (or any strtod-compatible text).
/// Throws std::invalid_argument on trailing garbage.
double parse_real(std::string_view text);
int parse_int(std::string_view text);

/// Splits one CSV line on commas. No quoting support; fields never contain
/// commas in the formats this project writes.
std::vector<std::string> split_csv_line(std::string_view line);

std::string trim(std::string_view s);

}  // namespace crt

#endif  // CRT_TEXT_HPP
