// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--known-failures 5,8] [--report file] [--workdir dir]
//
// Exit status is 0 when every criterion passes or fails only among the
// listed known failures, 1 otherwise.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qgeq/cli_runner.hpp"
#include "qgeq/ensemble_atlas.hpp"
#include "qgeq/ldp_montecarlo.hpp"
#include "qgeq/stability_analysis.hpp"

using namespace qgeq;
namespace fs = std::filesystem;
using oracle::kPi;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

GridSpec channel(std::size_t n1, std::size_t n2) {
  GridSpec s;
  s.n1 = n1;
  s.n2 = n2;
  s.radius = DeformationRadius::finite(0.2);
  return s;
}

const PriorModel& gamma_prior() {
  static const PriorModel p = PriorModel::gamma_skew(0.1);
  return p;
}

// Sweeps shared by several criteria.
struct Atlas {
  Grid grid{channel(1, 256)};
  Topography topo = Topography::zonal_sine(grid, 1.0);
  EntropySurface coarse, fine;
  std::vector<EquivalenceLabel> coarse_labels, fine_labels;
  double coarse_seconds = 0.0, fine_seconds = 0.0;

  void build() {
    SweepOptions o;
    o.backend = Backend::openmp;
    o.keep_states = true;
    oracle::Stopwatch a;
    coarse = sweep_entropy(grid, gamma_prior(), topo, {{0.005, 0.1, 0.005}, {-2.0, 2.0, 0.1}}, o);
    coarse_labels = classify_all(coarse, {}, Backend::openmp);
    coarse_seconds = a.seconds();
    o.keep_states = false;
    oracle::Stopwatch b;
    fine = sweep_entropy(grid, gamma_prior(), topo, {{0.0025, 0.1, 0.0025}, {-2.0, 2.0, 0.05}}, o);
    fine_labels = classify_all(fine, {}, Backend::openmp);
    fine_seconds = b.seconds();
  }
};

Verdict conjugacy() {
  const PriorModel& p = gamma_prior();
  oracle::Stopwatch sw;
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double y = -8.0 + 28.0 * k / 199.0;
    const double num = legendre_conjugate_oracle([&](double e) { return p.cgf(e); }, p.eta_domain(), y);
    const double ref = p.rate(y);
    worst = std::max(worst, std::abs(num - ref) / std::max(1.0, std::abs(ref)));
  }
  const double t = sw.seconds();
  return {worst <= 1e-8 && t < 1.0, fmt("max abs/rel error %.2e over 200 points, %.3f s", worst, t)};
}

Verdict eigenmode() {
  const Grid g(channel(64, 64));
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const Field q = topo.b + g.sample([](double, double x2) { return std::cos(kPi * x2); });
  const double err_h = std::abs(energy(g, q, topo) - 1.0 / (4.0 * (kPi * kPi + 25.0)));
  double err_g = 0.0;
  const int modes[5][3] = {{0, 1, 0}, {1, 1, 0}, {2, 3, 1}, {5, 2, 0}, {7, 9, 1}};
  for (const auto& md : modes) {
    const double w = 2.0 * kPi * md[0], km = md[1] * kPi;
    const Field phi = g.sample([&](double x1, double x2) {
      return (md[2] ? std::sin(w * x1) : std::cos(w * x1)) * std::sin(km * (x2 + 0.5));
    });
    const double lam = w * w + km * km + 25.0;
    err_g = std::max(err_g, (apply_green(g, phi) - phi / lam).cwiseAbs().maxCoeff());
  }
  return {err_h <= 1e-6 && err_g <= 1e-10,
          fmt("energy error %.2e at 64x64, Green eigen-consistency %.2e over 5 modes", err_h, err_g)};
}

Verdict solver_contract() {
  const Grid g(channel(1, 256));
  const Topography topo = Topography::zonal_sine(g, 1.0);
  oracle::Stopwatch sw;
  const EquilibriumState st = solve_microcanonical(g, gamma_prior(), topo, 0.05, -0.5);
  const double t = sw.seconds();
  const double dC = std::abs(st.circulation + 0.5), res = meanfield_residual(st, gamma_prior(), g);
  double rise = 0.0;
  for (std::size_t k = 1; k < st.history.size(); ++k) {
    const double prev = st.history[k - 1].information;
    rise = std::max(rise, (st.history[k].information - prev) / (1.0 + std::abs(prev)));
  }
  // increases within 1e-11 relative are round-off in the summed information
  const bool ok = st.converged && st.iterations <= 200 && dC <= 1e-8 && st.energy >= 0.05 - 1e-8 && res <= 1e-8 &&
                  rise <= 1e-11 && t < 30.0;
  return {ok, fmt("%s in %d iterations, |C-Gamma| %.1e, H-E %.1e, residual %.1e, max relative I rise %.1e, "
                  "%.3f s at 1x256",
                  to_string(st.status).c_str(), st.iterations, dC, st.energy - 0.05, res, rise, t)};
}

Verdict gaussian_oracle() {
  const GridSpec s = channel(16, 16);
  const Grid g(s);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const oracle::GaussianShellOracle ref(s, topo.b);
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> uE(0.01, 0.08), uG(-1.5, 1.5);
  double worst = 0.0;
  bool ok = true;
  for (int k = 0; k < 5; ++k) {
    const double E = uE(rng), Gamma = uG(rng);
    const EquilibriumState st = solve_microcanonical(g, PriorModel::gaussian(), topo, E, Gamma);
    const auto q = ref.solve(E, Gamma);
    if (!st.converged || !q) {
      ok = false;
      continue;
    }
    worst = std::max(worst, oracle::rel_l2(st.q, *q));
  }
  return {ok && worst <= 1e-6, fmt("max relative L2 difference %.2e over 5 random points at 16x16", worst)};
}

Verdict beta_sign_change(const Atlas& at) {
  // beta along Gamma = 0 from the fine sweep
  const auto& Gs = at.fine.circulations();
  const std::size_t j = std::size_t(std::find(Gs.begin(), Gs.end(), 0.0) - Gs.begin());
  std::vector<std::pair<double, double>> eb;
  for (std::size_t i = 0; i < at.fine.rows(); ++i) {
    if (at.fine.usable(at.fine.index(i, j))) eb.emplace_back(at.fine.energies()[i], at.fine.at(i, j).beta);
  }
  std::vector<std::pair<double, double>> changes;
  for (std::size_t k = 1; k < eb.size(); ++k) {
    if ((eb[k - 1].second > 0) != (eb[k].second > 0)) changes.emplace_back(eb[k - 1].first, eb[k].first);
  }
  // beta vanishes exactly where the constant field is the minimizer
  const double e0 = infinite_temperature_energy(at.grid, at.topo, 0.0);
  const bool inside = changes.size() == 1 && changes[0].first >= 0.005 && changes[0].second <= 0.02;
  std::string where;
  for (auto [a, b] : changes) where += fmt(" (%.4g, %.4g]", a, b);
  return {inside, fmt("%zu sign change(s) on E in [0.0025, 0.1]:%s; beta = 0 at E = %.6f; required in (0.005, 0.02)",
                      changes.size(), where.c_str(), e0)};
}

Verdict arnold_numbers() {
  const Grid g(channel(1, 256));
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState a = solve_microcanonical(g, gamma_prior(), topo, 0.05, -0.5);
  const EquilibriumState c = solve_microcanonical(g, gamma_prior(), topo, 0.05, 2.0);
  if (!a.converged || !c.converged) return {false, "a flow did not converge"};
  const ArnoldResult ra = arnold_check(a, gamma_prior(), g), rc = arnold_check(c, gamma_prior(), g);
  const bool ok_a = ra.dqdpsi_min >= 20.0 && ra.dqdpsi_max <= 95.0 && ra.dqdpsi_max > ra.lambda1;
  const bool ok_c = rc.dqdpsi_min >= -7.0 && rc.dqdpsi_max <= -3.0 && rc.rayleigh_ok;
  return {ok_a && ok_c, fmt("flow (a) dq/dpsi in [%.2f, %.2f], lambda1 = %.2f; flow (c) dq/dpsi in [%.2f, %.2f], "
                            "rayleigh_ok = %d",
                            ra.dqdpsi_min, ra.dqdpsi_max, ra.lambda1, rc.dqdpsi_min, rc.dqdpsi_max, int(rc.rayleigh_ok))};
}

Verdict classification(const Atlas& at) {
  const auto ka = at.coarse.find(0.05, -0.5), kc = at.coarse.find(0.05, 2.0);
  const auto fa = at.fine.find(0.05, -0.5), fc = at.fine.find(0.05, 2.0);
  if (!ka || !kc || !fa || !fc) return {false, "sweep misses a target point"};
  const EquivalenceLabel& la = at.coarse_labels[*ka];
  bool witness_ok = false;
  std::string wdesc = "none";
  if (la.kind == EquivalenceKind::nonequivalent && la.witness) {
    const SurfaceRecord &p = at.coarse[*ka], &w = at.coarse[*la.witness];
    const double gap = w.S - (p.S + p.beta * (w.E - p.E) + p.gamma * (w.Gamma - p.Gamma));
    witness_ok = gap > 1e-6 * (1.0 + std::abs(p.S));
    wdesc = fmt("(%.4g, %.4g) lies %.3g above the plane", w.E, w.Gamma, gap);
  }
  const bool full_c = at.coarse_labels[*kc].kind == EquivalenceKind::full;
  const bool stable = at.fine_labels[*fa].kind == la.kind && at.fine_labels[*fc].kind == at.coarse_labels[*kc].kind;
  // agreement over every coarse node, for information
  std::size_t same = 0, total = 0;
  for (std::size_t k = 0; k < at.coarse.size(); ++k) {
    const auto f = at.fine.find(at.coarse[k].E, at.coarse[k].Gamma);
    if (!f) continue;
    ++total;
    same += at.fine_labels[*f].kind == at.coarse_labels[k].kind;
  }
  return {witness_ok && full_c && stable,
          fmt("(0.05,-0.5) %s, witness %s; (0.05,2.0) %s; halved sweep: %s / %s; all coarse nodes agree %zu/%zu",
              to_string(la.kind).c_str(), wdesc.c_str(), to_string(at.coarse_labels[*kc].kind).c_str(),
              to_string(at.fine_labels[*fa].kind).c_str(), to_string(at.fine_labels[*fc].kind).c_str(), same, total)};
}

Verdict canonical_cross_check(const Atlas& at) {
  std::size_t full = 0, ok = 0;
  std::string first_bad;
  for (std::size_t k = 0; k < at.coarse.size(); ++k) {
    if (at.coarse_labels[k].kind != EquivalenceKind::full) continue;
    ++full;
    const CrossCheckReport r =
        cross_check_canonical(at.coarse, k, EquivalenceKind::full, at.grid, gamma_prior(), at.topo);
    const bool good = r.canonical_status == SolveStatus::converged && r.energy_rel_error <= 0.01 &&
                      r.circulation_rel_error <= 0.01 && r.state_rel_error <= 1e-3;
    if (good) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = fmt("; first miss (%.4g, %.4g): canonical state at (%.5g, %.5g), q error %.2e", at.coarse[k].E,
                      at.coarse[k].Gamma, r.E_canonical, r.Gamma_canonical, r.state_rel_error);
    }
  }
  return {full > 0 && ok == full, fmt("%zu/%zu full points reproduced%s", ok, full, first_bad.c_str())};
}

Verdict hull_and_gradient(const Atlas& at) {
  auto hull_gap = [](const EntropySurface& s) {
    const auto h = concave_hull(s, Backend::openmp);
    double m = kInfinite;
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.usable(k)) m = std::min(m, h[k] - s[k].S);
    return m;
  };
  const double gc = hull_gap(at.coarse), gf = hull_gap(at.fine);
  const GradientCheck fc = multiplier_gradient_check(at.fine), cc = multiplier_gradient_check(at.coarse);
  const bool ok = gc >= -1e-8 && gf >= -1e-8 && fc.fraction_beta() >= 0.9;
  return {ok, fmt("min S**-S %.1e (coarse), %.1e (halved); beta vs dS/dE agree at %.1f%% of %zu interior points "
                  "on the halved sweep (coarse sweep: %.1f%% of %zu); gamma %.1f%%",
                  gc, gf, 100 * fc.fraction_beta(), fc.checked, 100 * cc.fraction_beta(), cc.checked,
                  100 * fc.fraction_gamma())};
}

Verdict penalized_lyapunov() {
  const Grid g(channel(1, 64));
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState st = solve_microcanonical(g, gamma_prior(), topo, 0.05, -0.5);
  if (!st.converged) return {false, "flow (a) did not converge at 1x64"};
  const StabilityReport r = analyze_stability(st, gamma_prior(), g);
  const bool ok = r.mu_full < 0.0 && r.mu_tangent > 0.0 && r.penalized_min >= 0.5 * r.mu_tangent - 1e-8;
  return {ok, fmt("mu_full %.4f, mu_tangent %.4f, sigma %.4g, tau %.4g, penalized minimum %.4f (needs >= %.4f)",
                  r.mu_full, r.mu_tangent, r.sigma, r.tau, r.penalized_min, 0.5 * r.mu_tangent)};
}

Verdict ldp_rate() {
  MCConfig c;
  c.n_schedule = {64, 256, 1024, 4096, 16384};
  c.macrocells = 1;
  c.delta = 0.05;
  c.trials = 100000;
  c.backend = Backend::openmp;
  oracle::Stopwatch sw;
  const MCResult r = estimate_rate(c, PriorModel::gaussian(), 0.5);
  const double t = sw.seconds();
  const double rate = r.rows.back().rate, lo = 0.10125 * 0.85, hi = 0.15125 * 1.15;
  const bool ok = std::isfinite(rate) && rate >= lo && rate <= hi && r.monotone_trend && t < 60.0;
  return {ok, fmt("rate %.5f +- %.1e at n = 16384 (band [%.5f, %.5f]), monotone trend %d, %.2f s", rate,
                  r.rows.back().rate_se, lo, hi, int(r.monotone_trend), t)};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "qgeq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(int(argv.size()), argv.data());
}

Verdict determinism(const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work / "configs");
  auto write = [&](const std::string& name, const json& j) {
    const fs::path p = work / "configs" / name;
    std::ofstream(p) << j.dump(2);
    return p.string();
  };
  const json base = {{"grid", {{"n1", 1}, {"n2", 256}, {"radius", 0.2}}},
                     {"prior", {{"kind", "gamma"}, {"epsilon", 0.1}}},
                     {"topography", {{"kind", "zonal_sine"}, {"amplitude", 1.0}}},
                     {"backend", "openmp"}};
  auto with = [&](const json& block) {
    json j = base;
    j.update(block);
    return j;
  };
  const fs::path a = work / "first";
  struct Step {
    std::string command, name;
    json config;
  };
  const std::vector<Step> steps = {
      {"solve-microcanonical", "flow_a", with({{"microcanonical", {{"E", 0.05}, {"Gamma", -0.5}}}})},
      {"solve-canonical", "canonical", with({{"canonical", {{"beta", 3.65}, {"gamma", -1.0}}}})},
      {"sweep", "sweep",
       with({{"sweep", {{"energy", {{"min", 0.005}, {"max", 0.1}, {"step", 0.005}}},
                        {"circulation", {{"min", -2.0}, {"max", 2.0}, {"step", 0.1}}}}}})},
      {"classify", "classify",
       with({{"classify", {{"surface", (a / "sweep" / "surface.csv").string()}, {"cross_check", true}}}})},
      {"stability", "stability",
       with({{"stability", {{"points", json::array({{{"E", 0.05}, {"Gamma", -0.5}}, {{"E", 0.05}, {"Gamma", 2.0}}})}}}})},
      {"mc-ldp", "mc",
       {{"prior", {{"kind", "gaussian"}}},
        {"mc", {{"c", 0.5}, {"delta", 0.05}, {"trials", 100000}, {"n_schedule", {64, 256, 1024, 4096, 16384}}}},
        {"backend", "openmp"}}},
      {"plot", "plot_surface", {{"plot", {{"kind", "surface"}, {"surface", (a / "classify" / "classified.csv").string()}}}}},
      {"plot", "plot_section",
       {{"plot", {{"kind", "section"}, {"surface", (a / "sweep" / "surface.csv").string()}, {"E", 0.05}}}}},
  };
  for (const Step& s : steps) {
    const int rc = cli({s.command, "--config", write(s.name + ".json", s.config), "--out", (a / s.name).string()});
    if (rc != kExitOk) return {false, fmt("%s exited with %d", s.name.c_str(), rc)};
  }
  const fs::path b = work / "replay";
  std::size_t csv = 0, same = 0;
  std::string diff;
  for (const Step& s : steps) {
    const int rc = cli({s.command, "--config", (a / s.name / "manifest.json").string(), "--out", (b / s.name).string()});
    if (rc != kExitOk) return {false, fmt("replay of %s exited with %d", s.name.c_str(), rc)};
    for (const auto& e : fs::directory_iterator(a / s.name)) {
      if (e.path().extension() != ".csv") continue;
      ++csv;
      if (oracle::slurp(e.path()) == oracle::slurp(b / s.name / e.path().filename())) {
        ++same;
      } else if (diff.empty()) {
        diff = " first difference in " + s.name + "/" + e.path().filename().string();
      }
    }
  }
  return {csv > 0 && same == csv, fmt("%zu/%zu CSV artifacts byte-identical after replay from manifests%s", same,
                                      csv, diff.c_str())};
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string known, report;
  fs::path work = fs::temp_directory_path() / "qgeq_acceptance";
  app.add_option("--known-failures", known, "comma-separated criteria expected to fail");
  app.add_option("--report", report, "also write the report to this file");
  app.add_option("--workdir", work, "scratch directory for the pipeline replay");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> expected = parse_list(known);

  oracle::Stopwatch total;
  std::ostringstream log;
  std::vector<std::pair<int, Verdict>> results;
  auto record = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    oracle::Stopwatch sw;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const std::string line = fmt("criterion %2d %s  %s: ", id, v.pass ? "PASS" : "FAIL", name) + v.detail +
                             fmt(" [%.1f s]", sw.seconds());
    std::cout << line << std::endl;
    log << line << "\n";
    results.emplace_back(id, v);
  };

  Atlas atlas;
  record(1, "conjugacy oracle", conjugacy);
  record(2, "eigenmode energy", eigenmode);
  record(3, "solver contract", solver_contract);
  record(4, "gaussian dense oracle", gaussian_oracle);
  {
    atlas.build();
    std::cout << fmt("  (sweeps: coarse 20x41 in %.1f s, halved 40x81 in %.1f s)", atlas.coarse_seconds,
                     atlas.fine_seconds)
              << std::endl;
  }
  record(5, "beta sign change on Gamma = 0", [&] { return beta_sign_change(atlas); });
  record(6, "Arnold numbers", arnold_numbers);
  record(7, "equivalence classification", [&] { return classification(atlas); });
  record(8, "canonical cross-check", [&] { return canonical_cross_check(atlas); });
  record(9, "hull and gradient", [&] { return hull_and_gradient(atlas); });
  record(10, "penalized Lyapunov", penalized_lyapunov);
  record(11, "LDP Monte Carlo", ldp_rate);
  record(12, "determinism", [&] { return determinism(work); });

  int passed = 0;
  std::vector<int> unexpected, recovered;
  for (const auto& [id, v] : results) {
    passed += v.pass;
    if (!v.pass && !expected.count(id)) unexpected.push_back(id);
    if (v.pass && expected.count(id)) recovered.push_back(id);
  }
  std::ostringstream summary;
  summary << passed << "/" << results.size() << " criteria pass";
  if (!expected.empty()) {
    summary << "; known failures:";
    for (int k : expected) summary << " " << k;
  }
  for (int k : unexpected) summary << "; UNEXPECTED failure " << k;
  for (int k : recovered) summary << "; known failure " << k << " now passes";
  summary << fmt(" (%.1f s)", total.seconds());
  std::cout << summary.str() << std::endl;
  log << summary.str() << "\n";
  if (!report.empty()) std::ofstream(report) << log.str();
  return unexpected.empty() ? 0 : 1;
}
