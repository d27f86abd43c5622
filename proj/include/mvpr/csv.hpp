#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mvpr {

// Minimal RFC 4180 reader: comma separated, optional double-quoted fields
// with "" escapes, CRLF or LF line ends. The first record is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const;
  // Throws ParseError naming `context` when the column is absent.
  std::size_t require_column(std::string_view name, const std::string& context) const;
};

// Throws ParseError on an unterminated quote or a row whose field count
// differs from the header.
CsvTable parse_csv(std::string_view text, const std::string& context);

// Quotes the field when it contains a comma, quote or newline.
std::string csv_escape(std::string_view field);

// Shortest text that parses back to the same double.
std::string format_double(double v);
// Whole-field parse; throws ParseError mentioning `what`.
double parse_double(std::string_view s, const std::string& what);

}  // namespace mvpr
