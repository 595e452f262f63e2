#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ktraj {

/// Streaming reader for delimited text with a header row. Handles
/// RFC-4180 quoting; fields of the current row stay valid until next().
class DelimitedReader {
 public:
  DelimitedReader(const std::filesystem::path& path, char delimiter);
  static DelimitedReader from_text(std::string_view text, char delimiter);

  const std::vector<std::string>& header() const noexcept { return header_; }

  /// Column index of `name` in the header, if present.
  std::optional<std::size_t> column(std::string_view name) const;

  /// Advances to the next non-empty row. Returns false at end of file.
  bool next();

  const std::vector<std::string_view>& fields() const noexcept { return fields_; }
  std::size_t line_number() const noexcept { return line_number_; }

 private:
  explicit DelimitedReader(char delimiter) : delimiter_(delimiter) {}
  void start(const std::string& source);
  bool read_record();
  void split();

  std::vector<char> buffer_;
  std::size_t pos_ = 0;
  char delimiter_;
  std::vector<std::string> header_;
  std::string line_;
  std::string unquoted_;
  std::vector<std::string_view> fields_;
  std::size_t line_number_ = 0;
};

/// Quotes a field only when it contains the delimiter, a quote or a newline.
std::string csv_escape(std::string_view field, char delimiter = ',');

/// Shortest round-trip decimal form; "NA" for NaN.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_int(std::string_view text);
std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);
std::vector<std::string> split_list(std::string_view text, char separator = ',');

}  // namespace ktraj
