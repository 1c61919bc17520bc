#include "qgeq/ensemble_atlas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace qgeq {

std::vector<double> Axis::values() const {
  if (!std::isfinite(min) || !std::isfinite(max) || !(step > 0.0) || max < min) {
    throw ConfigError("axis: need finite min <= max and step > 0");
  }
  const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-6)) + 1;
  std::vector<double> v(n);
  // snapped to 1e-12 so that 0.1 * 19 prints as 1.9
  for (std::size_t i = 0; i < n; ++i) v[i] = std::round((min + static_cast<double>(i) * step) * 1e12) / 1e12;
  return v;
}

EntropySurface::EntropySurface(std::vector<double> E, std::vector<double> Gamma)
    : E_(std::move(E)), G_(std::move(Gamma)), records_(E_.size() * G_.size()) {
  for (std::size_t i = 0; i < E_.size(); ++i) {
    for (std::size_t j = 0; j < G_.size(); ++j) {
      records_[index(i, j)].E = E_[i];
      records_[index(i, j)].Gamma = G_[j];
    }
  }
}

std::optional<std::size_t> EntropySurface::find(double E, double Gamma) const {
  auto nearest = [](const std::vector<double>& v, double x) -> std::optional<std::size_t> {
    if (v.empty()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (std::abs(v[i] - x) < std::abs(v[best] - x)) best = i;
    }
    const double h = v.size() > 1 ? std::abs(v[1] - v[0]) : 1.0;
    if (std::abs(v[best] - x) > 0.25 * h) return std::nullopt;
    return best;
  };
  const auto i = nearest(E_, E);
  const auto j = nearest(G_, Gamma);
  if (!i || !j) return std::nullopt;
  return index(*i, *j);
}

namespace {

bool better(const EquilibriumState& a, const EquilibriumState& b) {
  if (a.converged != b.converged) return a.converged;
  if (a.converged) return a.entropy > b.entropy;
  return a.status != SolveStatus::infeasible && b.status == SolveStatus::infeasible;
}

struct PointResult {
  std::shared_ptr<const EquilibriumState> best;
  bool gap = false;
  double delta = 0.0;
};

PointResult solve_point(const Grid& grid, const PriorModel& prior, const Topography& topo, double E, double Gamma,
                        const std::shared_ptr<const EquilibriumState>& warm, const SweepOptions& opts) {
  SolverOptions so = opts.solver;
  so.record_history = false;
  so.backend = Backend::serial;
  PointResult out;
  std::shared_ptr<const EquilibriumState> warm_result, cold_result;
  if (warm) {
    so.warm_start = warm;
    warm_result = std::make_shared<const EquilibriumState>(solve_microcanonical(grid, prior, topo, E, Gamma, so));
  }
  if (!warm || opts.multistart) {
    so.warm_start.reset();
    cold_result = std::make_shared<const EquilibriumState>(solve_microcanonical(grid, prior, topo, E, Gamma, so));
  }
  if (warm_result && cold_result) {
    out.best = better(*warm_result, *cold_result) ? warm_result : cold_result;
    if (warm_result->converged && cold_result->converged) {
      out.delta = std::abs(warm_result->entropy - cold_result->entropy);
      out.gap = out.delta > opts.gap_tol * (1.0 + std::abs(out.best->entropy));
    }
  } else {
    out.best = warm_result ? warm_result : cold_result;
  }
  return out;
}

void store(SurfaceRecord& rec, const PointResult& r, bool keep) {
  const EquilibriumState& s = *r.best;
  rec.status = s.status;
  rec.admissible = s.status != SolveStatus::infeasible;
  rec.converged = s.converged;
  rec.iterations = s.iterations;
  rec.multistart_gap = r.gap;
  rec.multistart_delta = r.delta;
  if (s.converged) {
    rec.S = s.entropy;
    rec.beta = s.beta;
    rec.gamma = s.gamma;
  }
  if (keep) rec.state = r.best;
}

}  // namespace

EntropySurface sweep_entropy(const Grid& grid, const PriorModel& prior, const Topography& topo,
                             const SweepSpec& spec, const SweepOptions& opts) {
  opts.solver.validate();
  EntropySurface surface(spec.energy.values(), spec.circulation.values());
  const std::size_t nG = surface.cols();
  const std::size_t mid = nG / 2;

  parallel_for(opts.backend, surface.rows(), opts.jobs, [&](std::size_t iE) {
    const double E = surface.energies()[iE];
    if (!(E > 0.0)) {
      for (std::size_t j = 0; j < nG; ++j) surface.at(iE, j).status = SolveStatus::infeasible;
      return;
    }
    auto run = [&](std::size_t j, const std::shared_ptr<const EquilibriumState>& warm) {
      const PointResult r = solve_point(grid, prior, topo, E, surface.circulations()[j], warm, opts);
      store(surface.at(iE, j), r, opts.keep_states);
      return r.best->converged ? r.best : warm;
    };
    const auto centre = run(mid, nullptr);
    auto warm = centre;
    for (std::size_t j = mid + 1; j < nG; ++j) warm = run(j, warm);
    warm = centre;
    for (std::size_t j = mid; j-- > 0;) warm = run(j, warm);
  });
  return surface;
}

SupportResult support_test(const EntropySurface& surface, std::size_t k, const SupportTolerances& tol) {
  if (!surface.usable(k)) throw Error("support_test: record is not an admissible converged point");
  const SurfaceRecord& p = surface[k];
  const double scale = 1.0 + std::abs(p.S);
  const double ts = tol.support * scale, tc = tol.contact * scale;
  SupportResult out;
  out.supported = true;
  out.violation = -kInfinite;
  for (std::size_t j = 0; j < surface.size(); ++j) {
    if (!surface.usable(j)) continue;
    const SurfaceRecord& r = surface[j];
    const double gap = r.S - (p.S + p.beta * (r.E - p.E) + p.gamma * (r.Gamma - p.Gamma));
    out.violation = std::max(out.violation, gap);
    if (gap > ts) {
      if (out.supported) out.witness = j;
      out.supported = false;
    }
    if (std::abs(gap) <= tc) out.contacts.push_back(j);
  }
  return out;
}

std::string to_string(EquivalenceKind kind) {
  switch (kind) {
    case EquivalenceKind::full: return "full";
    case EquivalenceKind::partial: return "partial";
    case EquivalenceKind::nonequivalent: return "nonequivalent";
    case EquivalenceKind::inadmissible: return "inadmissible";
    case EquivalenceKind::unresolved: return "unresolved";
  }
  return "unknown";
}

EquivalenceKind parse_equivalence(const std::string& s) {
  for (auto k : {EquivalenceKind::full, EquivalenceKind::partial, EquivalenceKind::nonequivalent,
                 EquivalenceKind::inadmissible, EquivalenceKind::unresolved}) {
    if (s == to_string(k)) return k;
  }
  throw Error("unknown equivalence label '" + s + "'");
}

EquivalenceLabel classify(const EntropySurface& surface, std::size_t k, const SupportTolerances& tol) {
  EquivalenceLabel label;
  const SurfaceRecord& r = surface[k];
  if (!r.admissible) return label;
  if (!r.converged) {
    label.kind = EquivalenceKind::unresolved;
    return label;
  }
  SupportResult s = support_test(surface, k, tol);
  if (!s.supported) {
    label.kind = EquivalenceKind::nonequivalent;
    label.witness = s.witness;
    return label;
  }
  for (std::size_t c : s.contacts) {
    if (c != k) label.extra_contacts.push_back(c);
  }
  label.kind = label.extra_contacts.empty() ? EquivalenceKind::full : EquivalenceKind::partial;
  return label;
}

std::vector<EquivalenceLabel> classify_all(const EntropySurface& surface, const SupportTolerances& tol,
                                           Backend backend, int jobs) {
  std::vector<EquivalenceLabel> labels(surface.size());
  parallel_for(backend, surface.size(), jobs, [&](std::size_t k) { labels[k] = classify(surface, k, tol); });
  return labels;
}

double conjugate_phi(const EntropySurface& surface, double beta, double gamma) {
  double phi = kInfinite;
  for (std::size_t j = 0; j < surface.size(); ++j) {
    if (!surface.usable(j)) continue;
    const SurfaceRecord& r = surface[j];
    phi = std::min(phi, beta * r.E + gamma * r.Gamma - r.S);
  }
  if (is_infinite(phi)) throw Error("conjugate_phi: no admissible converged points");
  return phi;
}

std::vector<double> concave_hull(const EntropySurface& surface, Backend backend, int jobs) {
  std::vector<std::pair<double, double>> samples;
  double bmin = kInfinite, bmax = -kInfinite, gmin = kInfinite, gmax = -kInfinite;
  for (std::size_t j = 0; j < surface.size(); ++j) {
    if (!surface.usable(j)) continue;
    const SurfaceRecord& r = surface[j];
    samples.emplace_back(r.beta, r.gamma);
    bmin = std::min(bmin, r.beta);
    bmax = std::max(bmax, r.beta);
    gmin = std::min(gmin, r.gamma);
    gmax = std::max(gmax, r.gamma);
  }
  std::vector<double> hull(surface.size(), std::nan(""));
  if (samples.empty()) return hull;
  for (double b : {bmin, bmax}) {
    for (double g : {gmin, gmax}) samples.emplace_back(b, g);
  }
  std::vector<double> phi(samples.size());
  parallel_for(backend, samples.size(), jobs,
               [&](std::size_t s) { phi[s] = conjugate_phi(surface, samples[s].first, samples[s].second); });
  parallel_for(backend, surface.size(), jobs, [&](std::size_t k) {
    if (!surface.usable(k)) return;
    const SurfaceRecord& r = surface[k];
    double v = kInfinite;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      v = std::min(v, samples[s].first * r.E + samples[s].second * r.Gamma - phi[s]);
    }
    hull[k] = v;
  });
  return hull;
}

CrossCheckReport cross_check_canonical(const EntropySurface& surface, std::size_t k, EquivalenceKind label,
                                       const Grid& grid, const PriorModel& prior, const Topography& topo,
                                       const SolverOptions& opts) {
  CrossCheckReport rep;
  rep.label = label;
  if (!surface.usable(k)) {
    rep.note = "point has no multipliers";
    return rep;
  }
  const SurfaceRecord& r = surface[k];
  std::shared_ptr<const EquilibriumState> micro = r.state;
  if (!micro) {
    SolverOptions so = opts;
    so.warm_start.reset();
    micro = std::make_shared<const EquilibriumState>(solve_microcanonical(grid, prior, topo, r.E, r.Gamma, so));
  }
  SolverOptions co = opts;
  co.warm_start.reset();
  const EquilibriumState can = solve_canonical(grid, prior, topo, r.beta, r.gamma, co);
  rep.canonical_status = can.status;
  if (can.status == SolveStatus::unbounded) {
    rep.consistent = label == EquivalenceKind::nonequivalent;
    rep.note = can.message;
    return rep;
  }
  rep.E_canonical = can.energy;
  rep.Gamma_canonical = can.circulation;
  rep.energy_rel_error = std::abs(can.energy - r.E) / std::abs(r.E);
  rep.circulation_rel_error = std::abs(can.circulation - r.Gamma) / std::max(std::abs(r.Gamma), 1.0);
  if (micro->q.size() == can.q.size()) {
    rep.state_rel_error = l2_norm(grid, can.q - micro->q) / std::max(l2_norm(grid, micro->q), 1e-300);
  }
  if (label == EquivalenceKind::full || label == EquivalenceKind::partial) {
    rep.consistent = can.converged && rep.energy_rel_error <= 0.01 && rep.circulation_rel_error <= 0.01 &&
                     (label == EquivalenceKind::partial || rep.state_rel_error <= 1e-3);
  } else if (label == EquivalenceKind::nonequivalent) {
    const double tolE = 10.0 * opts.constraint_tol * (1.0 + std::abs(r.E));
    const double tolG = 10.0 * opts.constraint_tol * (1.0 + std::abs(r.Gamma));
    rep.consistent = std::abs(can.energy - r.E) > tolE || std::abs(can.circulation - r.Gamma) > tolG;
  }
  if (!can.converged) rep.note = "canonical solve: " + can.message;
  return rep;
}

GradientCheck multiplier_gradient_check(const EntropySurface& surface, double rel, double abs_floor) {
  GradientCheck g;
  const auto& E = surface.energies();
  const auto& G = surface.circulations();
  for (std::size_t i = 1; i + 1 < surface.rows(); ++i) {
    for (std::size_t j = 1; j + 1 < surface.cols(); ++j) {
      const std::size_t k = surface.index(i, j);
      const std::size_t n[4] = {surface.index(i - 1, j), surface.index(i + 1, j), surface.index(i, j - 1),
                                surface.index(i, j + 1)};
      if (!surface.usable(k) || !std::all_of(std::begin(n), std::end(n), [&](std::size_t m) {
            return surface.usable(m);
          })) {
        continue;
      }
      ++g.checked;
      const double dSdE = (surface[n[1]].S - surface[n[0]].S) / (E[i + 1] - E[i - 1]);
      const double dSdG = (surface[n[3]].S - surface[n[2]].S) / (G[j + 1] - G[j - 1]);
      const SurfaceRecord& r = surface[k];
      if (std::abs(r.beta - dSdE) <= std::max(rel * std::abs(r.beta), abs_floor)) ++g.passed_beta;
      if (std::abs(r.gamma - dSdG) <= std::max(rel * std::abs(r.gamma), abs_floor)) ++g.passed_gamma;
    }
  }
  return g;
}

namespace {
const std::vector<std::string> kSurfaceHeader = {"E",     "Gamma", "admissible", "converged", "S",
                                                 "beta",  "gamma", "label",      "witness_E", "witness_Gamma"};

CsvWriter::Cell optional_number(bool present, double v) {
  if (!present) return std::string();
  return v;
}
}  // namespace

void write_surface_csv(const EntropySurface& surface, const std::vector<EquivalenceLabel>& labels,
                       const std::filesystem::path& path) {
  if (labels.size() != surface.size()) throw Error("write_surface_csv: label count mismatch");
  CsvWriter csv(path, kSurfaceHeader);
  for (std::size_t k = 0; k < surface.size(); ++k) {
    const SurfaceRecord& r = surface[k];
    const bool u = surface.usable(k);
    const auto& w = labels[k].witness;
    csv.row({r.E, r.Gamma, static_cast<std::int64_t>(r.admissible), static_cast<std::int64_t>(r.converged),
             optional_number(u, r.S), optional_number(u, r.beta), optional_number(u, r.gamma),
             to_string(labels[k].kind), optional_number(w.has_value(), w ? surface[*w].E : 0.0),
             optional_number(w.has_value(), w ? surface[*w].Gamma : 0.0)});
  }
}

EntropySurface read_surface_csv(const std::filesystem::path& path, std::vector<EquivalenceLabel>* labels) {
  const CsvTable t = read_csv(path);
  if (t.header != kSurfaceHeader) throw Error(path.string() + ": not a surface CSV (header mismatch)");
  if (t.rows.empty()) throw Error(path.string() + ": surface CSV has no rows");
  std::map<double, int> Es, Gs;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    Es[t.number(r, 0)] = 0;
    Gs[t.number(r, 1)] = 0;
  }
  std::vector<double> E, G;
  for (auto& [v, _] : Es) E.push_back(v);
  for (auto& [v, _] : Gs) G.push_back(v);
  if (E.size() * G.size() != t.rows.size()) throw Error(path.string() + ": surface is not a rectangular grid");
  EntropySurface s(E, G);
  std::vector<EquivalenceLabel> lab(s.size());
  std::vector<std::pair<double, double>> witness(s.size(), {std::nan(""), std::nan("")});
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const double e = t.number(r, 0), g = t.number(r, 1);
    const std::size_t k = s.index(static_cast<std::size_t>(std::lower_bound(E.begin(), E.end(), e) - E.begin()),
                                  static_cast<std::size_t>(std::lower_bound(G.begin(), G.end(), g) - G.begin()));
    SurfaceRecord& rec = s[k];
    rec.admissible = t.number(r, 2) != 0.0;
    rec.converged = t.number(r, 3) != 0.0;
    rec.status = rec.converged ? SolveStatus::converged
                               : (rec.admissible ? SolveStatus::not_converged : SolveStatus::infeasible);
    rec.S = t.number(r, 4);
    rec.beta = t.number(r, 5);
    rec.gamma = t.number(r, 6);
    lab[k].kind = parse_equivalence(t.rows[r][7]);
    witness[k] = {t.number(r, 8), t.number(r, 9)};
  }
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (std::isfinite(witness[k].first)) lab[k].witness = s.find(witness[k].first, witness[k].second);
  }
  if (labels) *labels = std::move(lab);
  return s;
}

}  // namespace qgeq
