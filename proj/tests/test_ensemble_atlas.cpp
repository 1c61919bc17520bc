#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "oracles.hpp"
#include "qgeq/ensemble_atlas.hpp"

using namespace qgeq;

namespace {

// Surface with exact S and multipliers (beta = dS/dE, gamma = dS/dGamma).
EntropySurface synthetic(const std::function<double(double, double)>& S,
                         const std::function<std::pair<double, double>(double, double)>& grad, Axis e, Axis g) {
  EntropySurface s(e.values(), g.values());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      SurfaceRecord& r = s.at(i, j);
      r.E = s.energies()[i];
      r.Gamma = s.circulations()[j];
      r.admissible = r.converged = true;
      r.status = SolveStatus::converged;
      r.S = S(r.E, r.Gamma);
      std::tie(r.beta, r.gamma) = grad(r.E, r.Gamma);
    }
  }
  return s;
}

EntropySurface paraboloid() {
  return synthetic([](double E, double G) { return -0.5 * (E * E + G * G); },
                   [](double E, double G) { return std::pair{-E, -G}; }, {-1.0, 1.0, 0.1}, {-1.0, 1.0, 0.1});
}

// Concave in E, a double well in Gamma: S = -E^2 - (G^2 - 0.5)^2
EntropySurface double_well() {
  return synthetic([](double E, double G) { return -E * E - (G * G - 0.5) * (G * G - 0.5); },
                   [](double E, double G) { return std::pair{-2 * E, -4 * G * (G * G - 0.5)}; }, {-1.0, 1.0, 0.1},
                   {-1.0, 1.0, 0.05});
}

Grid zonal(std::size_t n2) {
  GridSpec s;
  s.n1 = 1;
  s.n2 = n2;
  s.radius = DeformationRadius::finite(0.2);
  return Grid(s);
}

}  // namespace

TEST_CASE("axis values are inclusive and free of accumulation noise") {
  const auto v = Axis{-2.0, 2.0, 0.1}.values();
  CHECK(v.size() == 41);
  CHECK(v.front() == -2.0);
  CHECK(v.back() == 2.0);
  CHECK(v[39] == 1.9);
  CHECK(Axis{0.005, 0.1, 0.005}.values().size() == 20);
  CHECK(Axis{1.0, 1.0, 0.5}.values().size() == 1);
}

TEST_CASE("strictly concave surface is fully equivalent") {
  const EntropySurface s = paraboloid();
  for (const auto& l : classify_all(s)) CHECK(l.kind == EquivalenceKind::full);
  const auto hull = concave_hull(s);
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(hull[k] == doctest::Approx(s[k].S).epsilon(1e-12));
  const GradientCheck gc = multiplier_gradient_check(s);
  CHECK(gc.checked == 19 * 19);
  CHECK(gc.fraction_beta() == 1.0);
  CHECK(gc.fraction_gamma() == 1.0);
}

TEST_CASE("conjugate of a paraboloid") {
  const EntropySurface s = paraboloid();
  for (auto [b, g] : {std::pair{0.0, 0.0}, {0.3, -0.2}, {-0.5, 0.5}}) {
    CHECK(conjugate_phi(s, b, g) == doctest::Approx(-0.5 * (b * b + g * g)).epsilon(1e-12));
  }
}

TEST_CASE("double well: nonequivalent band with verified witnesses") {
  const EntropySurface s = double_well();
  const auto labels = classify_all(s);
  const auto hull = concave_hull(s);
  std::size_t noneq = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const SurfaceRecord& r = s[k];
    CHECK(hull[k] >= r.S - 1e-12);
    // S is concave in Gamma exactly where 3 G^2 >= 0.5; the hull touches S
    // only for |G| >= 1/sqrt(2)
    if (std::abs(r.Gamma) < 0.65) {
      REQUIRE(labels[k].kind == EquivalenceKind::nonequivalent);
      REQUIRE(labels[k].witness.has_value());
      const SurfaceRecord& w = s[*labels[k].witness];
      const double plane = r.S + r.beta * (w.E - r.E) + r.gamma * (w.Gamma - r.Gamma);
      CHECK(w.S > plane + 1e-6 * (1 + std::abs(r.S)));
      CHECK(hull[k] > r.S + 1e-6);
      ++noneq;
    }
    if (std::abs(r.Gamma) > 0.75) CHECK(labels[k].kind == EquivalenceKind::full);
  }
  CHECK(noneq > 0);
}

TEST_CASE("flat direction gives partial equivalence") {
  // S independent of Gamma: every plane touches a whole line of records
  const EntropySurface s = synthetic([](double E, double) { return -E * E; },
                                     [](double E, double) { return std::pair{-2 * E, 0.0}; }, {0.0, 1.0, 0.1},
                                     {-1.0, 1.0, 0.5});
  for (const auto& l : classify_all(s)) {
    CHECK(l.kind == EquivalenceKind::partial);
    CHECK(l.extra_contacts.size() == 4);
  }
}

TEST_CASE("larger support tolerance never creates nonequivalence") {
  const EntropySurface s = double_well();
  const auto tight = classify_all(s, {1e-8, 1e-6});
  for (double t : {1e-6, 1e-4, 1e-2, 1e-1}) {
    const auto loose = classify_all(s, {t, std::max(t, 1e-4)});
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (loose[k].kind == EquivalenceKind::nonequivalent) CHECK(tight[k].kind == EquivalenceKind::nonequivalent);
    }
  }
}

TEST_CASE("inadmissible and unresolved records") {
  EntropySurface s = paraboloid();
  s[3].admissible = false;
  s[5].converged = false;
  const auto labels = classify_all(s);
  CHECK(labels[3].kind == EquivalenceKind::inadmissible);
  CHECK(labels[5].kind == EquivalenceKind::unresolved);
  CHECK_THROWS_AS(support_test(s, 3), Error);
  CHECK(std::isnan(concave_hull(s)[3]));
}

TEST_CASE("label names round-trip") {
  for (auto k : {EquivalenceKind::full, EquivalenceKind::partial, EquivalenceKind::nonequivalent,
                 EquivalenceKind::inadmissible, EquivalenceKind::unresolved}) {
    CHECK(parse_equivalence(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_equivalence("maybe"), Error);
}

TEST_CASE("surface csv round-trip") {
  const EntropySurface s = double_well();
  const auto labels = classify_all(s);
  const auto dir = oracle::scratch_dir("surface");
  write_surface_csv(s, labels, dir / "s.csv");
  std::vector<EquivalenceLabel> back_labels;
  const EntropySurface back = read_surface_csv(dir / "s.csv", &back_labels);
  REQUIRE(back.size() == s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    CHECK(back[k].S == s[k].S);
    CHECK(back[k].beta == s[k].beta);
    CHECK(back_labels[k].kind == labels[k].kind);
  }
  write_surface_csv(back, back_labels, dir / "t.csv");
  CHECK(oracle::slurp(dir / "s.csv") == oracle::slurp(dir / "t.csv"));
}

TEST_CASE("sweep: backends agree bitwise and the grid lookup works") {
  const Grid g = zonal(64);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const SweepSpec spec{{0.02, 0.06, 0.02}, {-1.0, 1.0, 0.5}};
  SweepOptions a, b;
  a.backend = Backend::serial;
  b.backend = Backend::openmp;
  b.jobs = 4;
  const EntropySurface sa = sweep_entropy(g, p, topo, spec, a);
  const EntropySurface sb = sweep_entropy(g, p, topo, spec, b);
  REQUIRE(sa.size() == 15);
  for (std::size_t k = 0; k < sa.size(); ++k) {
    CHECK(sa[k].converged);
    CHECK(std::memcmp(&sa[k].S, &sb[k].S, sizeof(double)) == 0);
    CHECK(std::memcmp(&sa[k].beta, &sb[k].beta, sizeof(double)) == 0);
  }
  CHECK(sa.find(0.04, 0.5) == sa.index(1, 3));
  CHECK_FALSE(sa.find(0.03, 0.5).has_value());
}

TEST_CASE("canonical cross-check at a concave point") {
  const Grid g = zonal(128);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  SweepOptions o;
  o.keep_states = true;
  const EntropySurface s = sweep_entropy(g, p, topo, {{0.045, 0.055, 0.005}, {1.9, 2.1, 0.1}}, o);
  const std::size_t k = *s.find(0.05, 2.0);
  const CrossCheckReport r = cross_check_canonical(s, k, EquivalenceKind::full, g, p, topo);
  CHECK(r.canonical_status == SolveStatus::converged);
  CHECK(r.consistent);
  CHECK(r.energy_rel_error < 0.01);
  CHECK(r.state_rel_error < 1e-3);
}
