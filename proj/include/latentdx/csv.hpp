#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace latentdx {

/// Reads a comma-separated file with a header row. Fields may be quoted
/// (RFC 4180); embedded newlines inside quotes are not supported.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  /// Column index for `name`, or nullopt when absent.
  std::optional<std::size_t> column(std::string_view name) const;
  /// Column index for `name`; throws DataError naming the file when absent.
  std::size_t require_column(std::string_view name) const;

  /// Advances to the next non-empty record. Returns false at end of file.
  bool next(std::vector<std::string>& fields);
  std::size_t line_number() const { return line_; }
  const std::filesystem::path& path() const { return path_; }

  /// "file:line: message" for error reporting.
  std::string where(std::string_view message) const;

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_csv_line(std::string_view line);

/// Shortest round-trip decimal representation.
std::string format_double(double value);
/// Fixed-precision representation, used for human-facing outputs.
std::string format_fixed(double value, int digits);

double parse_double(std::string_view text, const CsvReader& where);
long long parse_integer(std::string_view text, const CsvReader& where);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  CsvWriter& operator<<(std::string_view field);
  CsvWriter& operator<<(const std::string& field) { return *this << std::string_view(field); }
  CsvWriter& operator<<(const char* field) { return *this << std::string_view(field); }
  CsvWriter& operator<<(double value);
  CsvWriter& operator<<(long long value);
  CsvWriter& operator<<(std::size_t value);
  CsvWriter& operator<<(int value) { return *this << static_cast<long long>(value); }
  void end_row();

  template <typename... Fields>
  void row(const Fields&... fields) {
    ((*this << fields), ...);
    end_row();
  }

 private:
  void separator();
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace latentdx
