#include "harness/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace harness {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

CsvTable::CsvTable(std::string kind, std::string config_hash, std::vector<std::string> columns)
    : columns_(columns.size()) {
  text_ = "# tensorstream " + kind + " schema=" + std::to_string(kCsvSchemaVersion) +
          " config=" + config_hash + "\r\n";
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) text_ += ',';
    text_ += csv_escape(columns[i]);
  }
  text_ += "\r\n";
}

CsvTable& CsvTable::cell(const std::string& text) {
  pending_.push_back(csv_escape(text));
  return *this;
}

CsvTable& CsvTable::cell(double v) { return cell(format_number(v)); }

CsvTable& CsvTable::cell(long v) { return cell(std::to_string(v)); }

void CsvTable::end_row() {
  if (pending_.size() != columns_)
    throw std::logic_error("csv row has " + std::to_string(pending_.size()) + " cells, expected " +
                           std::to_string(columns_));
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    if (i) text_ += ',';
    text_ += pending_[i];
  }
  text_ += "\r\n";
  pending_.clear();
  ++rows_;
}

void CsvTable::footer(const std::string& text) { text_ += "# " + text + "\r\n"; }

void CsvTable::write(const std::filesystem::path& path) const { write_file_atomic(path, text_); }

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace harness
