#pragma once

// Text helpers shared by every file writer: shortest round-trip number
// formatting and RFC-4180 CSV fields.

#include <string>
#include <string_view>
#include <vector>

namespace collapselab {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(std::string_view s);
std::string csv_row(const std::vector<std::string>& fields);

/// Splits one CSV line (no embedded newlines) into fields.
std::vector<std::string> csv_split(std::string_view line);

double parse_double(std::string_view s);

} // namespace collapselab
