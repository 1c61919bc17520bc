#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "qgeq/stability_analysis.hpp"

using namespace qgeq;

namespace {

Grid grid(std::size_t n1, std::size_t n2) {
  GridSpec s;
  s.n1 = n1;
  s.n2 = n2;
  s.radius = DeformationRadius::finite(0.2);
  return Grid(s);
}

// Largest Green eigenvalue on the grid, i.e. the largest mode_eigenvalue.
double lambda_max(const Grid& g) {
  double m = 0.0;
  for (std::size_t k = 0; k <= g.n1() / 2; ++k) m = std::max(m, g.mode_eigenvalue(k, g.n2()));
  return m;
}

}  // namespace

TEST_CASE("second variation: dense matrix, apply and form agree") {
  const Grid g = grid(8, 8);
  const Field diag = oracle::random_field(g.size(), 1).cwiseAbs() + g.constant(0.5);
  const SecondVariation op(g, diag, -7.0);
  const Eigen::MatrixXd D = op.dense();
  CHECK((D - D.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd ref = Eigen::MatrixXd(diag.asDiagonal()) - 7.0 * oracle::dense_green(g.spec());
  CHECK((D - ref).cwiseAbs().maxCoeff() < 1e-11);
  const Field z1 = oracle::random_field(g.size(), 2), z2 = oracle::random_field(g.size(), 3);
  CHECK(op.form(z1, z2) == doctest::Approx(g.cell_area() * z1.dot(ref * z2)).epsilon(1e-11));
  CHECK(oracle::rel_l2(op.apply(z1), ref * z1) < 1e-12);
}

TEST_CASE("gaussian spectra: 1 + beta / lambda") {
  // dense path and Lanczos path
  for (const Grid& g : {grid(16, 16), grid(128, 64)}) {
    const Field one = g.constant(1.0);
    CHECK(min_eig_full(SecondVariation(g, one, -20.0)) ==
          doctest::Approx(1.0 - 20.0 / g.lambda_min()).epsilon(1e-8));
    // the bottom of this spectrum is a dense cluster; Lanczos gives a Ritz value from above
    const double exact = 1.0 + 30.0 / lambda_max(g);
    const double mu = min_eig_full(SecondVariation(g, one, 30.0));
    CHECK(mu >= exact - 1e-12);
    CHECK(mu <= exact + (g.size() > kDenseEigenLimit ? 1e-6 : 1e-12));
  }
}

TEST_CASE("constraints only raise the smallest eigenvalue") {
  const Grid g = grid(1, 64);
  const Field diag = oracle::random_field(g.size(), 4).cwiseAbs() + g.constant(0.2);
  const SecondVariation op(g, diag, -60.0);
  const Field psi = g.sample([](double, double x2) { return std::cos(oracle::kPi * x2) + 0.3 * x2; });
  const double full = min_eig_full(op), tan = min_eig_tangent(op, psi);
  CHECK(tan >= full - 1e-12);
  double prev = full;
  for (double s : {1.0, 10.0, 100.0, 1e4}) {
    const double pen = min_eig_penalized(op, psi, s, s);
    CHECK(pen >= prev - 1e-10);
    CHECK(pen <= tan + 1e-10);
    prev = pen;
  }
}

TEST_CASE("penalization constants") {
  const Grid g = grid(1, 64);
  CHECK_THROWS_AS(penalization_constants(g.constant(0.0), 1.0, 1.0, g), DegenerateGeometry);
  CHECK_THROWS_AS(penalization_constants(g.constant(2.0), 1.0, 1.0, g), DegenerateGeometry);
  CHECK_THROWS_AS(penalization_constants(g.sample([](double, double x2) { return x2; }), -1.0, 1.0, g), Error);
  const Field psi = g.sample([](double, double x2) { return x2; });
  const Penalization p = penalization_constants(psi, 0.4, 2.0, g);
  // psi is orthogonal to constants here
  CHECK(p.theta == doctest::Approx(1.0));
  CHECK(p.sigma > 0.0);
  CHECK(p.tau == doctest::Approx(p.K));
}

TEST_CASE("flow with westward and eastward jets: nonequivalent and stabilized by penalties") {
  const Grid g = grid(1, 64);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState st = solve_microcanonical(g, p, topo, 0.05, -0.5);
  REQUIRE(st.converged);
  const StabilityReport r = analyze_stability(st, p, g);
  CHECK(r.mu_full < 0.0);
  CHECK(r.mu_tangent > 0.0);
  CHECK(r.penalized_min >= 0.5 * r.mu_tangent - 1e-8);
  CHECK(r.lyapunov_penalized_ok);
  CHECK_FALSE(r.canonical_nondegenerate);
  CHECK(r.microcanonical_nondegenerate);
  const ArnoldResult a = arnold_check(st, p, g);
  CHECK(a.dqdpsi_min >= 20.0);
  CHECK(a.dqdpsi_max <= 95.0);
  CHECK(a.dqdpsi_max > a.lambda1);
  CHECK_FALSE(a.arnold2_ok);
  CHECK(a.lambda1 == doctest::Approx(oracle::kPi * oracle::kPi + 25.0));
}

TEST_CASE("positive-temperature flow satisfies the Rayleigh-type criterion") {
  const Grid g = grid(1, 256);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState st = solve_microcanonical(g, p, topo, 0.05, 2.0);
  REQUIRE(st.converged);
  const ArnoldResult a = arnold_check(st, p, g);
  CHECK(a.rayleigh_ok);
  CHECK(a.dqdpsi_min >= -7.0);
  CHECK(a.dqdpsi_max <= -3.0);
  const StabilityReport r = analyze_stability(st, p, g);
  CHECK(r.mu_full > 0.0);
  CHECK(r.canonical_nondegenerate);
}

TEST_CASE("nu bound dominates the operator norm") {
  const Grid g = grid(1, 32);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState st = solve_microcanonical(g, p, topo, 0.05, -0.5);
  REQUIRE(st.converged);
  const SecondVariation op = second_variation(st, p, g);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(op.dense()).eigenvalues();
  CHECK(ev.cwiseAbs().maxCoeff() <= nu_bound(st, p, g) * (1 + 1e-12));
  CHECK(min_eig_full(op) == doctest::Approx(ev.minCoeff()).epsilon(1e-9));
}

TEST_CASE("stability outputs") {
  const Grid g = grid(1, 32);
  const PriorModel p = PriorModel::gamma_skew(0.1);
  const Topography topo = Topography::zonal_sine(g, 1.0);
  const EquilibriumState st = solve_microcanonical(g, p, topo, 0.05, 2.0);
  const StabilityReport r = analyze_stability(st, p, g);
  const auto dir = oracle::scratch_dir("stability");
  write_stability_csv({r, r}, dir / "s.csv");
  const CsvTable t = read_csv(dir / "s.csv");
  CHECK(t.rows.size() == 2);
  CHECK(t.header.at(0) == "E");
  CHECK(stability_to_json(r, g).contains("mu_tangent"));
}
