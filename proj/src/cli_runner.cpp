#include "qgeq/cli_runner.hpp"

#include <chrono>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <boost/version.hpp>
#include <fftw3.h>

#include "qgeq/stability_analysis.hpp"

#ifndef QGEQ_VERSION
#define QGEQ_VERSION "0.0.0"
#endif

namespace qgeq {

namespace fs = std::filesystem;

json version_info() {
  json v;
  v["qgeq"] = QGEQ_VERSION;
  v["format"] = kFormatVersion;
  v["fftw"] = std::string(fftw_version);
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
  v["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                       std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  v["cli11"] = CLI11_VERSION;
  v["compiler"] = __VERSION__;
  v["openmp"] = openmp_enabled();
  return v;
}

namespace {

using Clock = std::chrono::steady_clock;

class Timer {
 public:
  void start(const std::string& phase) {
    phase_ = phase;
    t0_ = Clock::now();
  }
  void stop() { seconds_[phase_] += std::chrono::duration<double>(Clock::now() - t0_).count(); }
  json to_json() const {
    json j = json::object();
    for (const auto& [k, v] : seconds_) j[k] = v;
    return j;
  }

 private:
  std::string phase_;
  Clock::time_point t0_;
  std::map<std::string, double> seconds_;
};

struct Run {
  const RunConfig& cfg;
  std::ostream& log;
  Timer timer;
  std::vector<std::string> outputs;
  json summary = json::object();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return cfg.output / name;
  }
};

int exit_for(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return kExitOk;
    case SolveStatus::infeasible:
    case SolveStatus::unbounded: return kExitInfeasible;
    case SolveStatus::not_converged: return kExitNonconvergence;
  }
  return kExitNonconvergence;
}

void write_state_artifacts(Run& run, const EquilibriumState& st, const Grid& grid, const PriorModel& prior) {
  write_json(run.file("state.json"), state_to_json(st, grid, prior));
  write_history_csv(st, run.file("history.csv"));
  if (grid.matches(st.q) && grid.matches(st.psi)) {
    write_state_fields_csv(st, grid, run.file("fields.csv"));
    write_velocity_profile_csv(grid, st.psi, run.file("velocity.csv"));
  }
}

int point_solve(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Grid grid = make_grid(cfg);
  const PriorModel prior = make_prior(cfg.prior);
  const Topography topo = make_topography(cfg, grid);
  run.timer.start("solve");
  const EquilibriumState st =
      cfg.command == Command::solve_canonical
          ? solve_canonical(grid, prior, topo, cfg.point->a, cfg.point->b, cfg.solver)
          : solve_microcanonical(grid, prior, topo, cfg.point->a, cfg.point->b, cfg.solver);
  run.timer.stop();
  if (st.status == SolveStatus::infeasible) {
    run.log << to_string(st.ensemble) << ": infeasible target (" << cfg.point->a << ", " << cfg.point->b << ")\n";
  } else {
    run.log << to_string(st.ensemble) << ": " << to_string(st.status) << " after " << st.iterations
            << " iterations (E = " << format_double(st.energy) << ", Gamma = " << format_double(st.circulation)
            << ", beta = " << format_double(st.beta) << ", gamma = " << format_double(st.gamma) << ")\n";
  }
  if (!st.message.empty()) run.log << "  " << st.message << "\n";
  run.timer.start("write");
  write_state_artifacts(run, st, grid, prior);
  run.timer.stop();
  run.summary["status"] = to_string(st.status);
  return exit_for(st.status);
}

json label_counts(const std::vector<EquivalenceLabel>& labels) {
  std::map<std::string, std::size_t> n;
  for (const auto& l : labels) ++n[to_string(l.kind)];
  json j = json::object();
  for (auto k : {EquivalenceKind::full, EquivalenceKind::partial, EquivalenceKind::nonequivalent,
                 EquivalenceKind::inadmissible, EquivalenceKind::unresolved}) {
    j[to_string(k)] = n[to_string(k)];
  }
  return j;
}

int sweep(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Grid grid = make_grid(cfg);
  const PriorModel prior = make_prior(cfg.prior);
  const Topography topo = make_topography(cfg, grid);
  SweepOptions so;
  so.solver = cfg.solver;
  so.solver.record_history = false;
  so.backend = cfg.backend;
  so.jobs = cfg.jobs;
  so.multistart = cfg.multistart;
  run.timer.start("sweep");
  const EntropySurface surface = sweep_entropy(grid, prior, topo, *cfg.sweep, so);
  run.timer.stop();
  run.timer.start("classify");
  const auto labels = classify_all(surface, {}, cfg.backend, cfg.jobs);
  const auto hull = concave_hull(surface, cfg.backend, cfg.jobs);
  const GradientCheck gc = multiplier_gradient_check(surface);
  run.timer.stop();

  double hull_gap = kInfinite;
  std::size_t gaps = 0;
  for (std::size_t k = 0; k < surface.size(); ++k) {
    if (surface.usable(k)) hull_gap = std::min(hull_gap, hull[k] - surface[k].S);
    gaps += surface[k].multistart_gap ? 1 : 0;
  }
  write_surface_csv(surface, labels, run.file("surface.csv"));
  json s;
  s["rows"] = surface.rows();
  s["cols"] = surface.cols();
  s["labels"] = label_counts(labels);
  s["multistart_gaps"] = gaps;
  s["min_hull_minus_S"] = hull_gap;
  s["gradient_check"] = {{"checked", gc.checked},
                         {"beta_fraction", gc.fraction_beta()},
                         {"gamma_fraction", gc.fraction_gamma()}};
  write_json(run.file("sweep.json"), s);
  run.summary = s;
  run.log << "sweep: " << surface.rows() << " x " << surface.cols() << " points, labels " << s["labels"].dump()
          << "\n";
  return kExitOk;
}

int classify(Run& run) {
  const RunConfig& cfg = run.cfg;
  std::vector<EquivalenceLabel> previous;
  const EntropySurface surface = read_surface_csv(cfg.classify->surface, &previous);
  run.timer.start("classify");
  const auto labels = classify_all(surface, cfg.classify->tolerances, cfg.backend, cfg.jobs);
  run.timer.stop();
  write_surface_csv(surface, labels, run.file("classified.csv"));
  json s;
  s["labels"] = label_counts(labels);
  std::size_t changed = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) changed += labels[k].kind != previous[k].kind ? 1 : 0;
  s["changed_from_input"] = changed;

  if (cfg.classify->cross_check) {
    const Grid grid = make_grid(cfg);
    const PriorModel prior = make_prior(cfg.prior);
    const Topography topo = make_topography(cfg, grid);
    run.timer.start("cross_check");
    CsvWriter csv(run.file("crosscheck.csv"),
                  {"E", "Gamma", "label", "canonical_status", "E_canonical", "Gamma_canonical", "energy_rel_error",
                   "circulation_rel_error", "state_rel_error", "consistent"});
    std::size_t checked = 0, consistent = 0;
    for (std::size_t k = 0; k < surface.size(); ++k) {
      const EquivalenceKind kind = labels[k].kind;
      if (kind != EquivalenceKind::full && kind != EquivalenceKind::partial && kind != EquivalenceKind::nonequivalent) {
        continue;
      }
      const CrossCheckReport r = cross_check_canonical(surface, k, kind, grid, prior, topo, cfg.solver);
      ++checked;
      consistent += r.consistent ? 1 : 0;
      csv.row({surface[k].E, surface[k].Gamma, to_string(kind), to_string(r.canonical_status), r.E_canonical,
               r.Gamma_canonical, r.energy_rel_error, r.circulation_rel_error, r.state_rel_error,
               static_cast<std::int64_t>(r.consistent)});
    }
    run.timer.stop();
    s["cross_check"] = {{"checked", checked}, {"consistent", consistent}};
  }
  write_json(run.file("classify.json"), s);
  run.summary = s;
  run.log << "classify: labels " << s["labels"].dump() << "\n";
  return kExitOk;
}

int stability(Run& run) {
  const RunConfig& cfg = run.cfg;
  const Grid grid = make_grid(cfg);
  const PriorModel prior = make_prior(cfg.prior);
  const Topography topo = make_topography(cfg, grid);
  std::vector<StabilityReport> reports;
  json arr = json::array();
  int code = kExitOk;
  for (std::size_t i = 0; i < cfg.stability_points.size(); ++i) {
    const auto& p = cfg.stability_points[i];
    run.timer.start("solve");
    const EquilibriumState st = solve_microcanonical(grid, prior, topo, p.a, p.b, cfg.solver);
    run.timer.stop();
    if (!st.converged) {
      run.log << "stability: (" << format_double(p.a) << ", " << format_double(p.b) << ") " << to_string(st.status)
              << "; skipped\n";
      code = std::max(code, exit_for(st.status));
      continue;
    }
    run.timer.start("stability");
    StabilityReport r = analyze_stability(st, prior, grid);
    run.timer.stop();
    write_velocity_profile_csv(grid, st.psi, run.file("velocity_" + std::to_string(i) + ".csv"));
    arr.push_back(stability_to_json(r, grid));
    reports.push_back(std::move(r));
  }
  write_stability_csv(reports, run.file("stability.csv"));
  write_json(run.file("stability.json"), arr);
  run.summary["reports"] = reports.size();
  return code;
}

int mc_ldp(Run& run) {
  const RunConfig& cfg = run.cfg;
  PriorSpec ps = cfg.prior;
  if (!cfg.mc->prior_override.empty()) ps.kind = cfg.mc->prior_override;
  const PriorModel prior = make_prior(ps);
  if (prior.kind() == PriorKind::tabulated) throw ConfigError("config /mc: no sampler for tabulated priors");
  run.timer.start("monte_carlo");
  const MCResult r = estimate_rate(cfg.mc->config, prior, cfg.mc->c);
  run.timer.stop();
  write_mc_csv(r, run.file("mc.csv"));
  json j = mc_to_json(r, cfg.mc->config);
  j["prior"] = prior_to_json(prior);
  write_json(run.file("mc.json"), j);
  run.summary = {{"target", r.target}, {"monotone_trend", r.monotone_trend}};
  if (!r.rows.empty() && !r.rows.back().censored) run.summary["rate_last"] = r.rows.back().rate;
  return kExitOk;
}

int plot(Run& run) {
  const PlotSpec& ps = *run.cfg.plot;
  std::string svg, name;
  run.timer.start("plot");
  switch (ps.kind) {
    case PlotKind::surface: {
      std::vector<EquivalenceLabel> labels;
      const EntropySurface s = read_surface_csv(ps.surface, &labels);
      svg = plot_surface(s, labels, ps.marks);
      name = "surface.svg";
      break;
    }
    case PlotKind::section: {
      const EntropySurface s = read_surface_csv(ps.surface);
      svg = plot_section(s, ps.axis, ps.value);
      name = "section.svg";
      break;
    }
    case PlotKind::velocity:
      svg = plot_velocity(ps.profiles);
      name = "velocity.svg";
      break;
  }
  run.timer.stop();
  write_svg(run.file(name), svg);
  return kExitOk;
}

}  // namespace

int run_command(const RunConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.output);
  Run run{cfg, log, {}, {}, {}};
  const auto t0 = Clock::now();
  int code = kExitOk;
  switch (cfg.command) {
    case Command::solve_canonical:
    case Command::solve_microcanonical: code = point_solve(run); break;
    case Command::sweep: code = sweep(run); break;
    case Command::classify: code = classify(run); break;
    case Command::stability: code = stability(run); break;
    case Command::mc_ldp: code = mc_ldp(run); break;
    case Command::plot: code = plot(run); break;
  }
  json m;
  m["format"] = kFormatVersion;
  m["command"] = to_string(cfg.command);
  m["config"] = cfg.source;
  m["versions"] = version_info();
  json timings = run.timer.to_json();
  timings["total"] = std::chrono::duration<double>(Clock::now() - t0).count();
  m["timings_seconds"] = timings;
  m["outputs"] = run.outputs;
  m["summary"] = run.summary;
  m["exit_code"] = code;
  write_json(cfg.output / "manifest.json", m);
  return code;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Statistical equilibria of the quasi-geostrophic channel: solvers, ensemble atlas, stability and "
               "large-deviation checks"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", QGEQ_VERSION);

  std::string config_path;
  std::string out;
  int jobs = -1;
  std::uint64_t seed = 0;
  const std::pair<Command, const char*> commands[] = {
      {Command::solve_canonical, "Minimize I + beta H + gamma C at given multipliers"},
      {Command::solve_microcanonical, "Maximize entropy at given energy and circulation"},
      {Command::sweep, "Tabulate S(E, Gamma) over a grid and label equivalence"},
      {Command::classify, "Relabel a surface CSV, optionally cross-checking with canonical solves"},
      {Command::stability, "Second-variation and Arnold-type stability of microcanonical states"},
      {Command::mc_ldp, "Monte Carlo estimate of the coarse-grained large-deviation rate"},
      {Command::plot, "Render surface, section or velocity SVGs"}};
  std::map<CLI::App*, Command> by_app;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(cmd), help);
    sub->add_option("--config", config_path, "JSON run configuration (or a manifest.json to re-run)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--jobs", jobs, "worker threads, 0 = all cores (overrides the config)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    by_app[sub] = cmd;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }
  CLI::App* chosen = app.get_subcommands().front();
  const Command command = by_app.at(chosen);
  Overrides ov;
  if (chosen->count("--out")) ov.out = fs::path(out);
  if (chosen->count("--jobs")) ov.jobs = jobs;
  if (chosen->count("--seed")) ov.seed = seed;

  RunConfig cfg;
  try {
    cfg = load_run_config(config_path, command, ov);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    return run_command(cfg, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace qgeq
