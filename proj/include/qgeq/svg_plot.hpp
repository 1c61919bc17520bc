#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qgeq/ensemble_atlas.hpp"

namespace qgeq {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

/// Line chart rendered to a standalone SVG string. Output depends only on the
/// inputs (fixed number formatting, no timestamps).
struct LineChart {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  /// Optional horizontal reference line (e.g. y = 0).
  bool zero_line = false;

  std::string render(int width = 720, int height = 460) const;
};

/// Categorical map on a rectangular grid: cell (ix, iy) colored by
/// categories[iy * xs.size() + ix].
struct RegionMap {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<std::string> categories;
  std::vector<std::pair<std::string, std::string>> palette;  ///< category -> color, legend order
  std::vector<std::pair<double, double>> marks;               ///< highlighted points (x, y)

  std::string render(int width = 720, int height = 520) const;
};

/// Writes `svg` to `path`, replacing it.
void write_svg(const std::filesystem::path& path, const std::string& svg);

/// Equivalence-region map over (Gamma, E).
std::string plot_surface(const EntropySurface& surface, const std::vector<EquivalenceLabel>& labels,
                         const std::vector<std::pair<double, double>>& marks = {});

enum class SectionAxis { fixed_energy, fixed_circulation };

/// S and its concave hull along a section through the surface (nearest grid line).
std::string plot_section(const EntropySurface& surface, SectionAxis axis, double value);

/// v1(x2) profiles from velocity CSVs (columns x2,v1,psi); one series per file.
std::string plot_velocity(const std::vector<std::pair<std::string, std::filesystem::path>>& profiles);

}  // namespace qgeq
