#include "qgeq/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace qgeq {

namespace fs = std::filesystem;

std::string to_string(Command c) {
  switch (c) {
    case Command::solve_canonical: return "solve-canonical";
    case Command::solve_microcanonical: return "solve-microcanonical";
    case Command::sweep: return "sweep";
    case Command::classify: return "classify";
    case Command::stability: return "stability";
    case Command::mc_ldp: return "mc-ldp";
    case Command::plot: return "plot";
  }
  return "unknown";
}

std::string block_name(Command c) {
  switch (c) {
    case Command::solve_canonical: return "canonical";
    case Command::solve_microcanonical: return "microcanonical";
    case Command::sweep: return "sweep";
    case Command::classify: return "classify";
    case Command::stability: return "stability";
    case Command::mc_ldp: return "mc";
    case Command::plot: return "plot";
  }
  return "";
}

namespace {

const Command kAllCommands[] = {Command::solve_canonical, Command::solve_microcanonical, Command::sweep,
                                Command::classify,        Command::stability,            Command::mc_ldp,
                                Command::plot};

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config " + (path.empty() ? std::string("/") : path) + ": " + what);
}

// Strict object reader: every key must be consumed, errors carry the JSON path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }
  std::string at(const std::string& key) const { return path_ + "/" + key; }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  Node child(const std::string& key) { return Node(raw(key), at(key)); }

  double number(const std::string& key) {
    if (!has(key)) fail(at(key), "required field is missing");
    const json& v = raw(key);
    if (!v.is_number()) fail(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(at(key), "expected a finite number");
    return d;
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(at(key), "expected an integer");
    return v.get<std::int64_t>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    if (!has(key)) fail(at(key), "required field is missing");
    const json& v = raw(key);
    if (!v.is_string()) fail(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : fallback;
  }

  /// Rejects keys that were never read.
  void finish(const std::string& hint = {}) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(at(it.key()), "unexpected field" + (hint.empty() ? "" : " (" + hint + ")"));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  // absolute, so that a manifest can be re-run from any directory
  return fs::absolute(path).lexically_normal();
}

fs::path existing_file(const fs::path& base, Node& n, const std::string& key) {
  const fs::path p = resolve(base, n.string(key));
  if (!fs::is_regular_file(p)) fail(n.at(key), "file not found: " + p.string());
  return p;
}

Axis parse_axis(Node n) {
  Axis a;
  a.min = n.number("min");
  a.max = n.number("max");
  a.step = n.number("step");
  n.finish("an axis takes min, max and step");
  if (!(a.step > 0.0)) fail(n.at("step"), "must be positive");
  if (a.max < a.min) fail(n.at("max"), "must not be below min");
  return a;
}

PointSpec parse_point(Node n, const char* first, const char* second, const std::string& hint) {
  PointSpec p;
  p.a = n.number(first);
  p.b = n.number(second);
  n.finish(hint);
  return p;
}

json axis_json(const Axis& a) { return json{{"min", a.min}, {"max", a.max}, {"step", a.step}}; }

json effective_json(const RunConfig& c) {
  json j;
  json g;
  g["n1"] = c.grid.n1;
  g["n2"] = c.grid.n2;
  g["period_length"] = c.grid.period_length;
  g["channel_width"] = c.grid.channel_width;
  if (c.grid.radius.is_infinite()) g["radius"] = "inf";
  else g["radius"] = c.grid.radius.value();
  j["grid"] = g;

  json p{{"kind", c.prior.kind}};
  if (c.prior.kind == "gamma") p["epsilon"] = c.prior.epsilon;
  if (c.prior.kind == "tabulated") p["path"] = c.prior.path.string();
  j["prior"] = p;

  json t{{"kind", c.topography.kind}};
  if (c.topography.kind == "zonal_sine") t["amplitude"] = c.topography.amplitude;
  if (c.topography.kind == "field") t["path"] = c.topography.path.string();
  j["topography"] = t;

  j["solver"] = {{"max_outer_iters", c.solver.max_outer_iters}, {"constraint_tol", c.solver.constraint_tol},
                 {"residual_tol", c.solver.residual_tol},       {"damping", c.solver.damping},
                 {"newton_max_iters", c.solver.newton_max_iters}};
  j["backend"] = to_string(c.backend);
  j["output"] = c.output.string();
  j["jobs"] = c.jobs;
  j["seed"] = c.seed;

  switch (c.command) {
    case Command::solve_canonical:
      j["canonical"] = {{"beta", c.point->a}, {"gamma", c.point->b}};
      break;
    case Command::solve_microcanonical:
      j["microcanonical"] = {{"E", c.point->a}, {"Gamma", c.point->b}};
      break;
    case Command::sweep:
      j["sweep"] = {{"energy", axis_json(c.sweep->energy)},
                    {"circulation", axis_json(c.sweep->circulation)},
                    {"multistart", c.multistart}};
      break;
    case Command::classify:
      j["classify"] = {{"surface", c.classify->surface.string()},
                       {"tol_support", c.classify->tolerances.support},
                       {"tol_contact", c.classify->tolerances.contact},
                       {"cross_check", c.classify->cross_check}};
      break;
    case Command::stability: {
      json pts = json::array();
      for (const auto& s : c.stability_points) pts.push_back({{"E", s.a}, {"Gamma", s.b}});
      j["stability"] = {{"points", pts}};
      break;
    }
    case Command::mc_ldp: {
      const MCConfig& m = c.mc->config;
      json mc;
      mc["c"] = c.mc->c;
      mc["delta"] = m.delta;
      mc["trials"] = m.trials;
      mc["n_schedule"] = m.n_schedule;
      mc["macrocells"] = m.macrocells;
      mc["importance"] = m.importance;
      mc["sampling"] = to_string(m.sampling);
      if (!c.mc->prior_override.empty()) mc["prior"] = c.mc->prior_override;
      j["mc"] = mc;
      break;
    }
    case Command::plot: {
      const PlotSpec& ps = *c.plot;
      json pl;
      switch (ps.kind) {
        case PlotKind::surface: {
          pl["kind"] = "surface";
          pl["surface"] = ps.surface.string();
          json marks = json::array();
          for (const auto& [gm, em] : ps.marks) marks.push_back({{"E", em}, {"Gamma", gm}});
          pl["marks"] = marks;
          break;
        }
        case PlotKind::section:
          pl["kind"] = "section";
          pl["surface"] = ps.surface.string();
          if (ps.axis == SectionAxis::fixed_energy) pl["E"] = ps.value;
          else pl["Gamma"] = ps.value;
          break;
        case PlotKind::velocity: {
          pl["kind"] = "velocity";
          json prof = json::array();
          for (const auto& [label, path] : ps.profiles) prof.push_back({{"label", label}, {"path", path.string()}});
          pl["profiles"] = prof;
          break;
        }
      }
      j["plot"] = pl;
      break;
    }
  }
  return j;
}

}  // namespace

RunConfig parse_run_config(const json& input, Command command, const Overrides& overrides, const fs::path& base_dir) {
  const json* body = &input;
  // a run manifest carries the effective config under "config"
  if (input.is_object() && input.contains("config") && input.contains("command")) body = &input.at("config");
  Node root(*body, "");
  RunConfig c;
  c.command = command;

  std::vector<std::string> blocks;
  for (Command k : kAllCommands) {
    if (root.has(block_name(k))) blocks.push_back(block_name(k));
  }
  if (blocks.size() != 1) {
    std::string found;
    for (const auto& b : blocks) found += (found.empty() ? "" : ", ") + b;
    fail("", "exactly one command block expected, found " + (found.empty() ? std::string("none") : found));
  }
  if (blocks.front() != block_name(command)) {
    fail("/" + blocks.front(), "block does not match subcommand " + to_string(command) + " (expects '" +
                                   block_name(command) + "')");
  }

  // topography first: it decides the default resolution
  if (root.has("topography")) {
    Node t = root.child("topography");
    c.topography.kind = t.string("kind", "zonal_sine");
    if (c.topography.kind == "zonal_sine") {
      c.topography.amplitude = t.number("amplitude", 1.0);
    } else if (c.topography.kind == "field") {
      c.topography.path = existing_file(base_dir, t, "path");
    } else if (c.topography.kind != "none") {
      fail(t.at("kind"), "unknown topography '" + c.topography.kind + "' (zonal_sine, none or field)");
    }
    t.finish();
  }
  const bool zonal = c.topography.kind != "field";
  c.grid.n1 = zonal ? 1 : 64;
  c.grid.n2 = zonal ? 256 : 64;
  c.grid.radius = DeformationRadius::finite(0.2);
  if (root.has("grid")) {
    Node g = root.child("grid");
    const auto n1 = g.integer("n1", static_cast<std::int64_t>(c.grid.n1));
    const auto n2 = g.integer("n2", static_cast<std::int64_t>(c.grid.n2));
    if (n1 <= 0) fail(g.at("n1"), "must be positive");
    if (n2 <= 0) fail(g.at("n2"), "must be positive");
    c.grid.n1 = static_cast<std::size_t>(n1);
    c.grid.n2 = static_cast<std::size_t>(n2);
    c.grid.period_length = g.number("period_length", 1.0);
    c.grid.channel_width = g.number("channel_width", 1.0);
    if (g.has("radius")) {
      const json& r = g.raw("radius");
      if (r.is_string() && (r.get<std::string>() == "inf" || r.get<std::string>() == "infinity")) {
        c.grid.radius = DeformationRadius::infinite();
      } else if (r.is_number() && r.get<double>() > 0.0 && std::isfinite(r.get<double>())) {
        c.grid.radius = DeformationRadius::finite(r.get<double>());
      } else {
        fail(g.at("radius"), "expected a positive number or \"inf\"");
      }
    }
    g.finish();
    try {
      validate(c.grid);
    } catch (const ConfigError& e) {
      fail("/grid", e.what());
    }
  }

  if (root.has("prior")) {
    Node p = root.child("prior");
    c.prior.kind = p.string("kind", "gamma");
    if (c.prior.kind == "gamma") {
      c.prior.epsilon = p.number("epsilon", 0.1);
      if (!(c.prior.epsilon > 0.0)) fail(p.at("epsilon"), "must be positive (use kind gaussian for 0)");
    } else if (c.prior.kind == "tabulated") {
      c.prior.path = existing_file(base_dir, p, "path");
    } else if (c.prior.kind != "gaussian") {
      fail(p.at("kind"), "unknown prior '" + c.prior.kind + "' (gamma, gaussian or tabulated)");
    }
    p.finish();
  }

  if (root.has("solver")) {
    Node s = root.child("solver");
    c.solver.max_outer_iters = static_cast<int>(s.integer("max_outer_iters", c.solver.max_outer_iters));
    c.solver.constraint_tol = s.number("constraint_tol", c.solver.constraint_tol);
    c.solver.residual_tol = s.number("residual_tol", c.solver.residual_tol);
    c.solver.damping = s.number("damping", c.solver.damping);
    c.solver.newton_max_iters = static_cast<int>(s.integer("newton_max_iters", c.solver.newton_max_iters));
    s.finish();
    try {
      c.solver.validate();
    } catch (const ConfigError& e) {
      fail("/solver", e.what());
    }
  }
  if (root.has("backend")) {
    const std::string b = root.string("backend");
    try {
      c.backend = parse_backend(b);
    } catch (const ConfigError& e) {
      fail("/backend", e.what());
    }
  }
  c.output = root.string("output", "out");
  const std::int64_t jobs = root.integer("jobs", 0);
  if (jobs < 0) fail("/jobs", "must be non-negative (0 = all cores)");
  c.jobs = static_cast<int>(jobs);
  c.seed = root.unsigned_integer("seed", c.seed);

  const std::string bn = block_name(command);
  switch (command) {
    case Command::solve_canonical:
      c.point = parse_point(root.child(bn), "beta", "gamma", "the canonical block takes beta and gamma");
      break;
    case Command::solve_microcanonical:
      c.point = parse_point(root.child(bn), "E", "Gamma", "the microcanonical block takes E and Gamma");
      if (!(c.point->a > 0.0)) fail("/microcanonical/E", "must be positive");
      break;
    case Command::sweep: {
      Node s = root.child(bn);
      SweepSpec sp;
      if (!s.has("energy")) fail(s.at("energy"), "required field is missing");
      if (!s.has("circulation")) fail(s.at("circulation"), "required field is missing");
      sp.energy = parse_axis(s.child("energy"));
      sp.circulation = parse_axis(s.child("circulation"));
      if (!(sp.energy.min > 0.0)) fail("/sweep/energy/min", "energies must be positive");
      c.multistart = s.boolean("multistart", true);
      s.finish();
      c.sweep = sp;
      break;
    }
    case Command::classify: {
      Node s = root.child(bn);
      ClassifySpec cs;
      cs.surface = existing_file(base_dir, s, "surface");
      cs.tolerances.support = s.number("tol_support", cs.tolerances.support);
      cs.tolerances.contact = s.number("tol_contact", cs.tolerances.contact);
      if (!(cs.tolerances.support >= 0.0)) fail(s.at("tol_support"), "must be non-negative");
      if (!(cs.tolerances.contact >= 0.0)) fail(s.at("tol_contact"), "must be non-negative");
      cs.cross_check = s.boolean("cross_check", false);
      s.finish();
      c.classify = cs;
      break;
    }
    case Command::stability: {
      Node s = root.child(bn);
      if (!s.has("points")) fail(s.at("points"), "required field is missing");
      const json& pts = s.raw("points");
      if (!pts.is_array() || pts.empty()) fail(s.at("points"), "expected a non-empty array");
      for (std::size_t i = 0; i < pts.size(); ++i) {
        c.stability_points.push_back(parse_point(Node(pts[i], s.at("points") + "/" + std::to_string(i)), "E",
                                                 "Gamma", "a stability point takes E and Gamma"));
      }
      s.finish();
      break;
    }
    case Command::mc_ldp: {
      Node s = root.child(bn);
      McSpec m;
      m.c = s.number("c");
      m.config.delta = s.number("delta", m.config.delta);
      m.config.trials = static_cast<std::size_t>(s.unsigned_integer("trials", m.config.trials));
      m.config.macrocells = static_cast<std::size_t>(s.unsigned_integer("macrocells", m.config.macrocells));
      if (s.has("n_schedule")) {
        const json& ns = s.raw("n_schedule");
        if (!ns.is_array() || ns.empty()) fail(s.at("n_schedule"), "expected a non-empty array");
        m.config.n_schedule.clear();
        for (std::size_t i = 0; i < ns.size(); ++i) {
          if (!ns[i].is_number_unsigned() || ns[i].get<std::uint64_t>() == 0) {
            fail(s.at("n_schedule") + "/" + std::to_string(i), "expected a positive integer");
          }
          m.config.n_schedule.push_back(ns[i].get<std::size_t>());
        }
      }
      m.config.importance = s.boolean("importance", true);
      try {
        m.config.sampling = parse_block_sampling(s.string("sampling", "exact"));
      } catch (const ConfigError& e) {
        fail(s.at("sampling"), e.what());
      }
      if (s.has("prior")) {
        m.prior_override = s.string("prior");
        if (m.prior_override != "gaussian" && m.prior_override != "gamma") {
          fail(s.at("prior"), "expected gaussian or gamma");
        }
      }
      s.finish();
      try {
        m.config.validate();
      } catch (const ConfigError& e) {
        fail("/mc", e.what());
      }
      c.mc = m;
      break;
    }
    case Command::plot: {
      Node s = root.child(bn);
      PlotSpec ps;
      const std::string kind = s.string("kind");
      if (kind == "surface" || kind == "section") {
        ps.kind = kind == "surface" ? PlotKind::surface : PlotKind::section;
        ps.surface = existing_file(base_dir, s, "surface");
        if (ps.kind == PlotKind::section) {
          const bool hasE = s.has("E"), hasG = s.has("Gamma");
          if (hasE == hasG) fail(s.path(), "a section takes exactly one of E or Gamma");
          ps.axis = hasE ? SectionAxis::fixed_energy : SectionAxis::fixed_circulation;
          ps.value = hasE ? s.number("E") : s.number("Gamma");
        } else if (s.has("marks")) {
          const json& mk = s.raw("marks");
          if (!mk.is_array()) fail(s.at("marks"), "expected an array");
          for (std::size_t i = 0; i < mk.size(); ++i) {
            const PointSpec p = parse_point(Node(mk[i], s.at("marks") + "/" + std::to_string(i)), "E", "Gamma",
                                            "a mark takes E and Gamma");
            ps.marks.emplace_back(p.b, p.a);
          }
        }
      } else if (kind == "velocity") {
        ps.kind = PlotKind::velocity;
        if (!s.has("profiles")) fail(s.at("profiles"), "required field is missing");
        const json& pr = s.raw("profiles");
        if (!pr.is_array() || pr.empty()) fail(s.at("profiles"), "expected a non-empty array");
        for (std::size_t i = 0; i < pr.size(); ++i) {
          Node e(pr[i], s.at("profiles") + "/" + std::to_string(i));
          const std::string label = e.string("label");
          const fs::path path = existing_file(base_dir, e, "path");
          e.finish();
          ps.profiles.emplace_back(label, path);
        }
      } else {
        fail(s.at("kind"), "unknown plot kind '" + kind + "' (surface, section or velocity)");
      }
      s.finish();
      c.plot = ps;
      break;
    }
  }
  root.finish();

  if (overrides.out) c.output = *overrides.out;
  else c.output = resolve(base_dir, c.output.string());
  if (overrides.jobs) {
    if (*overrides.jobs < 0) throw ConfigError("--jobs must be non-negative");
    c.jobs = *overrides.jobs;
  }
  if (overrides.seed) c.seed = *overrides.seed;
  if (c.mc) {
    c.mc->config.seed = c.seed;
    c.mc->config.backend = c.backend;
    c.mc->config.jobs = c.jobs;
  }
  c.solver.backend = c.backend;
  c.source = effective_json(c);
  return c;
}

RunConfig load_run_config(const fs::path& path, Command command, const Overrides& overrides) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = read_json(path);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j, command, overrides, path.parent_path());
}

Grid make_grid(const RunConfig& cfg) { return Grid(cfg.grid); }

PriorModel make_prior(const PriorSpec& spec) {
  if (spec.kind == "gaussian") return PriorModel::gaussian();
  if (spec.kind == "tabulated") return PriorModel::load_csv(spec.path);
  return PriorModel::gamma_skew(spec.epsilon);
}

Topography make_topography(const RunConfig& cfg, const Grid& grid) {
  const TopographySpec& t = cfg.topography;
  if (t.kind == "none") return Topography::none(grid);
  if (t.kind == "zonal_sine") return Topography::zonal_sine(grid, t.amplitude);
  const CsvTable table = read_csv(t.path);
  const std::size_t col = table.column("b");
  if (table.rows.size() != grid.size()) {
    throw ConfigError("topography " + t.path.string() + ": " + std::to_string(table.rows.size()) + " rows, grid has " +
                      std::to_string(grid.size()) + " cells");
  }
  Field b(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    b[static_cast<Eigen::Index>(r)] = table.number(r, col);
    if (!std::isfinite(b[static_cast<Eigen::Index>(r)])) {
      throw ConfigError("topography " + t.path.string() + ": non-finite value in row " + std::to_string(r + 1));
    }
  }
  return Topography::from_field(grid, std::move(b));
}

}  // namespace qgeq
