#pragma once

// RFC-4180 CSV output with locale-independent shortest round-trip numbers.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace harness {

inline constexpr int kCsvSchemaVersion = 1;

/// Shortest representation that parses back to the same double; "nan",
/// "inf" and "-inf" for non-finite values.
std::string format_number(double v);

class CsvTable {
 public:
  /// `kind` and `config_hash` go into the leading comment line.
  CsvTable(std::string kind, std::string config_hash, std::vector<std::string> columns);

  CsvTable& cell(const std::string& text);
  CsvTable& cell(double v);
  CsvTable& cell(long v);
  CsvTable& cell(int v) { return cell(static_cast<long>(v)); }
  CsvTable& cell(bool v) { return cell(std::string(v ? "1" : "0")); }
  CsvTable& empty_cell() { return cell(std::string()); }
  CsvTable& cell(const std::optional<double>& v) { return v ? cell(*v) : empty_cell(); }
  void end_row();

  /// Comment line appended after the last row.
  void footer(const std::string& text);

  std::size_t rows() const { return rows_; }
  const std::string& text() const { return text_; }

  /// Writes to a sibling temporary file and renames it into place.
  void write(const std::filesystem::path& path) const;

 private:
  std::string text_;
  std::vector<std::string> pending_;
  std::size_t columns_;
  std::size_t rows_ = 0;
};

/// Atomic replace of `path` with `contents`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string csv_escape(const std::string& field);

}  // namespace harness
