#pragma once

// Byte-stable number formatting, CSV tables and atomic file writes.

#include <qmbdp/error.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace qmbdp {

/// Shortest representation that round-trips; identical on every platform.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

inline std::string format_number(long long x) { return std::to_string(x); }
inline std::string format_number(int x) { return std::to_string(x); }
inline std::string format_number(unsigned long long x) { return std::to_string(x); }
inline std::string format_number(unsigned long x) { return std::to_string(x); }
inline std::string format_number(long x) { return std::to_string(x); }

inline double parse_number(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  if (text == "nan") return NAN;
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw ValidationError("not a number: '" + std::string(text) + "'");
  return value;
}

/// Plain comma-separated table; fields never contain commas or newlines.
class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  [[nodiscard]] const std::vector<std::string>& header() const noexcept { return header_; }
  [[nodiscard]] const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }

  void add(std::vector<std::string> row) {
    if (row.size() != header_.size())
      throw Error("CSV row has " + std::to_string(row.size()) + " fields, header has " +
                  std::to_string(header_.size()));
    for (auto& field : row)
      for (char& c : field)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    rows_.push_back(std::move(row));
  }

  void append(const CsvTable& other) {
    if (other.header_ != header_) throw Error("CSV tables with different headers");
    rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
  }

  /// Index of a column; the unit suffix in brackets is ignored.
  [[nodiscard]] std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
      std::string_view h = header_[i];
      if (h == name) return i;
      const auto bracket = h.find('[');
      if (bracket != std::string_view::npos && h.substr(0, bracket) == name) return i;
    }
    throw ValidationError("CSV has no column '" + std::string(name) + "'");
  }

  [[nodiscard]] bool has_column(std::string_view name) const {
    try {
      (void)column(name);
      return true;
    } catch (const ValidationError&) {
      return false;
    }
  }

  [[nodiscard]] std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
      }
      out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
  }

  static CsvTable parse(std::string_view text) {
    CsvTable t;
    bool first = true;
    while (!text.empty()) {
      auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::size_t start = 0;
      for (;;) {
        const auto comma = line.find(',', start);
        fields.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (first) {
        t.header_ = std::move(fields);
        first = false;
      } else {
        if (fields.size() != t.header_.size())
          throw ValidationError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                                std::to_string(t.header_.size()));
        t.rows_.push_back(std::move(fields));
      }
    }
    if (first) throw ValidationError("empty CSV");
    return t;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary and renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

}  // namespace qmbdp
