#include "eqtariff/csv.hpp"

#include <charconv>
#include <cmath>

#include "eqtariff/domain.hpp"

namespace eqtariff::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_number(std::string_view field, double& value) {
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw InternalError("format_double: buffer too small");
  return std::string(buf, ptr);
}

std::vector<std::vector<double>> read_numeric_rows(const std::filesystem::path& path,
                                                   std::vector<std::size_t>* line_numbers) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_skipped = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto fields = split(trimmed);
    std::vector<double> values(fields.size());
    bool any_numeric = false;
    std::size_t first_bad = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (parse_number(fields[c], values[c])) {
        if (!std::isfinite(values[c])) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) + ": column " +
                               std::to_string(c + 1) + " is not finite",
                           line_no, c + 1);
        }
        any_numeric = true;
      } else if (first_bad == 0) {
        first_bad = c + 1;
      }
    }
    if (first_bad != 0) {
      if (rows.empty() && !any_numeric && !header_skipped) {
        header_skipped = true;
        continue;
      }
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": column " +
                           std::to_string(first_bad) + " is not a number ('" +
                           std::string(fields[first_bad - 1]) + "')",
                       line_no, first_bad);
    }
    rows.push_back(std::move(values));
    if (line_numbers) line_numbers->push_back(line_no);
  }
  return rows;
}

Writer::Writer(const std::filesystem::path& path) : path_(path), out_(path) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
}

Writer& Writer::header(std::span<const std::string> names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out_ << ',';
    out_ << names[i];
  }
  out_ << '\n';
  return *this;
}

Writer& Writer::header(std::initializer_list<std::string> names) {
  return header(std::span<const std::string>(names.begin(), names.size()));
}

Writer& Writer::row(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out_ << ',';
    out_ << format_double(values[i]);
  }
  out_ << '\n';
  return *this;
}

Writer& Writer::row(std::initializer_list<double> values) {
  return row(std::span<const double>(values.begin(), values.size()));
}

Writer& Writer::row(std::span<const std::string> text, std::span<const double> values) {
  bool first = true;
  for (const auto& t : text) {
    if (!first) out_ << ',';
    out_ << t;
    first = false;
  }
  for (double v : values) {
    if (!first) out_ << ',';
    out_ << format_double(v);
    first = false;
  }
  out_ << '\n';
  return *this;
}

void Writer::close() {
  out_.flush();
  if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  out_.close();
}

std::vector<std::string> numbered(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

}  // namespace eqtariff::csv
