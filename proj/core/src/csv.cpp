#include "ktraj/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ktraj/error.hpp"

namespace ktraj {

DelimitedReader::DelimitedReader(const std::filesystem::path& path, char delimiter) : delimiter_(delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  buffer_.resize(size);
  if (size > 0) in.read(buffer_.data(), static_cast<std::streamsize>(size));
  start(path.string());
}

DelimitedReader DelimitedReader::from_text(std::string_view text, char delimiter) {
  DelimitedReader r(delimiter);
  r.buffer_.assign(text.begin(), text.end());
  r.start("text input");
  return r;
}

void DelimitedReader::start(const std::string& source) {
  const auto size = buffer_.size();
  if (size >= 3 && static_cast<unsigned char>(buffer_[0]) == 0xEF &&
      static_cast<unsigned char>(buffer_[1]) == 0xBB && static_cast<unsigned char>(buffer_[2]) == 0xBF) {
    pos_ = 3;
  }
  if (!next()) throw DataError("missing header row in " + source);
  for (auto f : fields_) header_.emplace_back(trim(f));
}

std::optional<std::size_t> DelimitedReader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return i;
  }
  return std::nullopt;
}

bool DelimitedReader::read_record() {
  line_.clear();
  bool in_quotes = false;
  bool any = false;
  while (pos_ < buffer_.size()) {
    const char c = buffer_[pos_++];
    any = true;
    if (c == '"') in_quotes = !in_quotes;
    if (c == '\n' && !in_quotes) {
      ++line_number_;
      if (!line_.empty() && line_.back() == '\r') line_.pop_back();
      return true;
    }
    if (c == '\n') ++line_number_;
    line_.push_back(c);
  }
  if (any) {
    ++line_number_;
    if (!line_.empty() && line_.back() == '\r') line_.pop_back();
  }
  return any;
}

void DelimitedReader::split() {
  fields_.clear();
  if (line_.find('"') == std::string::npos) {
    std::string_view rest(line_);
    while (true) {
      const auto cut = rest.find(delimiter_);
      fields_.push_back(rest.substr(0, cut));
      if (cut == std::string_view::npos) break;
      rest.remove_prefix(cut + 1);
    }
    return;
  }
  unquoted_.clear();
  unquoted_.reserve(line_.size() + 1);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line_.size(); ++i) {
    const char c = line_[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line_.size() && line_[i + 1] == '"') {
          unquoted_.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        unquoted_.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == delimiter_) {
      spans.emplace_back(start, unquoted_.size() - start);
      start = unquoted_.size();
    } else {
      unquoted_.push_back(c);
    }
  }
  spans.emplace_back(start, unquoted_.size() - start);
  const std::string_view all(unquoted_);
  for (auto [s, n] : spans) fields_.push_back(all.substr(s, n));
}

bool DelimitedReader::next() {
  while (read_record()) {
    if (line_.empty()) continue;
    split();
    return true;
  }
  fields_.clear();
  return false;
}

std::string csv_escape(std::string_view field, char delimiter) {
  if (field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  return text;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(std::string_view text) {
  text = trim(text);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_list(std::string_view text, char separator) {
  std::vector<std::string> out;
  while (true) {
    const auto cut = text.find(separator);
    auto item = trim(text.substr(0, cut));
    if (!item.empty()) out.emplace_back(item);
    if (cut == std::string_view::npos) break;
    text.remove_prefix(cut + 1);
  }
  return out;
}

}  // namespace ktraj
