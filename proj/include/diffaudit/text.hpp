#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace diffaudit::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);

/// Trims and collapses internal runs of whitespace to a single space.
std::string normalize_whitespace(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Decodes %XX escapes and '+' as space (application/x-www-form-urlencoded).
std::string percent_decode(std::string_view s);

/// Splits "a=1&b=2" into name/value pairs; empty segments are dropped.
std::vector<std::pair<std::string, std::string>> parse_form(std::string_view s);

/// Quotes a field for CSV output when needed (RFC 4180).
std::string csv_field(std::string_view s);

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
std::vector<std::string> parse_csv_line(std::string_view line);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Fixed-precision decimal rendering with trailing zeros trimmed ("0.8", "1", "0.125").
std::string format_number(double value, int precision = 6);

}  // namespace diffaudit::text
