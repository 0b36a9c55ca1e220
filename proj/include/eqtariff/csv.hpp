#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace eqtariff::csv {

/// Shortest decimal text that parses back to exactly `x`.
std::string format_double(double x);

/// Numeric rows of a comma-separated file. A first line whose fields are all
/// non-numeric is treated as a header and skipped; blank lines are ignored.
/// Throws ParseError naming the 1-based line and column of the first bad field.
/// When `line_numbers` is given it receives the source line of every row.
std::vector<std::vector<double>> read_numeric_rows(const std::filesystem::path& path,
                                                   std::vector<std::size_t>* line_numbers = nullptr);

/// Header row followed by data rows; dot decimal, no quoting.
class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);

  Writer& header(std::span<const std::string> names);
  Writer& header(std::initializer_list<std::string> names);
  Writer& row(std::span<const double> values);
  Writer& row(std::initializer_list<double> values);
  /// Leading text cells followed by numbers.
  Writer& row(std::span<const std::string> text, std::span<const double> values);

  /// Flushes and reports write failures as IoError.
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Header cells "<prefix>1".."<prefix>n".
std::vector<std::string> numbered(const std::string& prefix, std::size_t n);

}  // namespace eqtariff::csv
