#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qgeq/ensemble_atlas.hpp"
#include "qgeq/io.hpp"
#include "qgeq/ldp_montecarlo.hpp"
#include "qgeq/svg_plot.hpp"

namespace qgeq {

/// Subcommands, one per command block of the config.
enum class Command { solve_canonical, solve_microcanonical, sweep, classify, stability, mc_ldp, plot };

std::string to_string(Command c);
/// Name of the config block that belongs to a command ("canonical", "sweep", ...).
std::string block_name(Command c);

struct PriorSpec {
  std::string kind = "gamma";  ///< gamma | gaussian | tabulated
  double epsilon = 0.1;
  std::filesystem::path path;  ///< tabulated density CSV
};

struct TopographySpec {
  std::string kind = "zonal_sine";  ///< zonal_sine | none | field
  double amplitude = 1.0;
  std::filesystem::path path;  ///< field CSV with a `b` column in grid order
};

struct PointSpec {
  double a = 0.0;  ///< E or beta
  double b = 0.0;  ///< Gamma or gamma
};

struct ClassifySpec {
  std::filesystem::path surface;
  SupportTolerances tolerances;
  bool cross_check = false;
};

enum class PlotKind { surface, section, velocity };

struct PlotSpec {
  PlotKind kind = PlotKind::surface;
  std::filesystem::path surface;
  SectionAxis axis = SectionAxis::fixed_circulation;
  double value = 0.0;
  std::vector<std::pair<std::string, std::filesystem::path>> profiles;
  std::vector<std::pair<double, double>> marks;  ///< (Gamma, E)
};

struct McSpec {
  MCConfig config;
  std::string prior_override;  ///< empty: use the run's prior
  double c = 0.5;
};

/// Fully validated run description. `source` keeps the effective config
/// (after command-line overrides) for the manifest.
struct RunConfig {
  Command command = Command::solve_microcanonical;
  GridSpec grid;
  PriorSpec prior;
  TopographySpec topography;
  SolverOptions solver;
  Backend backend = Backend::serial;
  std::filesystem::path output = "out";
  int jobs = 0;
  std::uint64_t seed = 20240601;

  std::optional<PointSpec> point;
  std::optional<SweepSpec> sweep;
  bool multistart = true;
  std::optional<ClassifySpec> classify;
  std::vector<PointSpec> stability_points;
  std::optional<McSpec> mc;
  std::optional<PlotSpec> plot;

  json source;
};

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
};

/// Parses and validates a config for `command`. A run manifest is accepted
/// too (its `config` member is used). Relative paths inside the config are
/// resolved against `base_dir`. Throws ConfigError with a JSON-pointer path
/// (e.g. "/microcanonical/beta: unexpected field") on any violation.
RunConfig parse_run_config(const json& j, Command command, const Overrides& overrides = {},
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path, Command command, const Overrides& overrides = {});

Grid make_grid(const RunConfig& cfg);
PriorModel make_prior(const PriorSpec& spec);
Topography make_topography(const RunConfig& cfg, const Grid& grid);

}  // namespace qgeq
