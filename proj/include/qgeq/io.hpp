#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace qgeq {

using json = nlohmann::ordered_json;

/// Version tag written into every JSON record and manifest.
inline constexpr const char* kFormatVersion = "qgeq/1";

/// Shortest round-trip decimal representation ("inf", "-inf", "nan" for
/// non-finite values). Identical bits always give identical text.
std::string format_double(double v);

/// Minimal CSV writer: fixed header, one call per row. Throws Error if the
/// row width does not match the header.
class CsvWriter {
 public:
  using Cell = std::variant<double, std::int64_t, std::string>;

  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  void row(std::initializer_list<Cell> cells);
  void row(const std::vector<Cell>& cells);

 private:
  std::ofstream out_;
  std::size_t width_;
  std::filesystem::path path_;
};

/// Parsed CSV with a header row. Cells are kept as text.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws Error when missing.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace qgeq
