#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace fairdemand::csv {

// Splits one CSV line. Double-quoted fields may contain commas; a trailing
// '\r' is dropped.
std::vector<std::string> split(std::string_view line);

// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

double parse_double(std::string_view s);  // throws ValidationError
long long parse_int(std::string_view s);

// Shortest text that reads back to the same double.
std::string format_exact(double v);
// Fixed-point with `digits` decimals; used for report tables.
std::string format_fixed(double v, int digits);

std::string trim(std::string_view s);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Reads a whole CSV; lines starting with '#' are skipped.
Table read(std::istream& in);

}  // namespace fairdemand::csv
