#include <doctest.h>

#include <cmath>
#include <fstream>

#include <boost/math/tools/minima.hpp>

#include "oracles.hpp"
#include "qgeq/prior_models.hpp"

using namespace qgeq;

namespace {

// sup_eta [eta y - f(eta)] by Brent on a fixed bracket; f is evaluated only
// through the closed form written out here.
double brent_conjugate_gamma(double eps, double y) {
  auto f = [eps](double eta) { return -eta / eps - std::log1p(-eps * eta) / (eps * eps); };
  const auto r = boost::math::tools::brent_find_minima([&](double eta) { return f(eta) - eta * y; },
                                                       -1e3, 1.0 / eps * (1.0 - 1e-12), 60);
  return -r.second;
}

double gamma_rate(double eps, double y) { return y / eps - std::log1p(eps * y) / (eps * eps); }

}  // namespace

TEST_CASE("gamma prior rate matches the numeric conjugate of its cgf") {
  const PriorModel p = PriorModel::gamma_skew(0.1);
  oracle::Stopwatch sw;
  for (int k = 0; k < 200; ++k) {
    const double y = -8.0 + 28.0 * k / 199.0;
    const double num = legendre_conjugate_oracle([&](double e) { return p.cgf(e); }, p.eta_domain(), y);
    const double ref = p.rate(y);
    CHECK(std::abs(num - ref) <= 1e-8 * std::max(1.0, std::abs(ref)));
  }
  CHECK(sw.seconds() < 1.0);
}

TEST_CASE("gamma prior closed forms agree with an independent Brent transform") {
  for (double eps : {0.05, 0.1, 0.3}) {
    const PriorModel p = PriorModel::gamma_skew(eps);
    for (double y : {-8.0, -2.0, -0.3, 0.0, 0.7, 4.0, 15.0}) {
      if (y <= -1.0 / eps) continue;
      CHECK(p.rate(y) == doctest::Approx(gamma_rate(eps, y)).epsilon(1e-13));
      CHECK(p.rate(y) == doctest::Approx(brent_conjugate_gamma(eps, y)).epsilon(1e-9));
    }
  }
}

TEST_CASE("rate is infinite outside the support and domain errors carry the boundary") {
  const PriorModel p = PriorModel::gamma_skew(0.1);
  CHECK(is_infinite(p.rate(-10.0)));
  CHECK(is_infinite(p.rate(-11.0)));
  CHECK(std::isfinite(p.rate(-9.999)));
  try {
    p.cgf(10.5);
    FAIL("expected DomainError");
  } catch (const DomainError& e) {
    CHECK(e.boundary() == doctest::Approx(10.0));
  }
  CHECK_THROWS_AS(p.rate_derivs(-12.0), DomainError);
  CHECK_THROWS_AS(PriorModel::gamma_skew(-0.1), ConfigError);
}

TEST_CASE("moments: zero mean, unit variance, third moment 2 eps") {
  for (double eps : {0.0, 0.1, 0.25}) {
    const PriorModel p = eps == 0.0 ? PriorModel::gaussian() : PriorModel::gamma_skew(eps);
    // derivatives of f at 0 are the cumulants
    const double h = 1e-3;
    CHECK(std::abs(p.mean_map(0.0)) < 1e-14);
    CHECK(p.variance_map(0.0) == doctest::Approx(1.0).epsilon(1e-14));
    const double k3 = (p.variance_map(h) - p.variance_map(-h)) / (2 * h);
    CHECK(k3 == doctest::Approx(2 * eps).epsilon(1e-5));
    CHECK(p.cgf(0.0) == 0.0);
    CHECK(p.rate(0.0) == 0.0);
  }
}

TEST_CASE("rate derivatives invert the cgf derivatives") {
  const PriorModel p = PriorModel::gamma_skew(0.1);
  for (double eta : {-30.0, -3.0, -0.5, 0.0, 0.8, 5.0, 9.0}) {
    const double y = p.mean_map(eta);
    const Derivs d = p.rate_derivs(y);
    CHECK(d.first == doctest::Approx(eta).epsilon(1e-10));
    CHECK(d.second * p.variance_map(eta) == doctest::Approx(1.0).epsilon(1e-10));
    // Fenchel equality f(eta) + i(f'(eta)) = eta f'(eta)
    CHECK(p.cgf(eta) + p.rate(y) == doctest::Approx(eta * y).epsilon(1e-10));
    const double h = 1e-6 * std::max(1.0, std::abs(y));
    CHECK((p.rate(y + h) - p.rate(y - h)) / (2 * h) == doctest::Approx(d.first).epsilon(1e-6));
  }
}

TEST_CASE("gaussian is the eps -> 0 limit") {
  const PriorModel g = PriorModel::gaussian(), s = PriorModel::gamma_skew(1e-6);
  for (double y : {-3.0, -1.0, 0.5, 2.0}) CHECK(s.rate(y) == doctest::Approx(g.rate(y)).epsilon(1e-5));
  CHECK(g.rate(3.0) == doctest::Approx(4.5));
  CHECK(g.decay_delta().has_value());
}

TEST_CASE("Young inequality on a grid") {
  const PriorModel p = PriorModel::gamma_skew(0.1);
  for (double eta = -20.0; eta < 9.9; eta += 0.7) {
    for (double y = -9.5; y < 30.0; y += 1.3) CHECK(eta * y <= p.cgf(eta) + p.rate(y) + 1e-12);
  }
}

TEST_CASE("tabulated uniform prior") {
  const double a = std::sqrt(3.0);
  std::vector<double> y, d;
  for (int j = 0; j <= 400; ++j) {
    y.push_back(-a + 2 * a * j / 400.0);
    d.push_back(1.0 / (2 * a));
  }
  const PriorModel p = PriorModel::tabulated(y, d);
  CHECK(p.kind() == PriorKind::tabulated);
  CHECK(std::abs(p.mean()) < 1e-12);
  for (double eta : {-2.0, -0.5, 0.3, 1.5}) {
    const double ref = std::log(std::sinh(a * eta) / (a * eta));
    CHECK(p.cgf(eta) == doctest::Approx(ref).epsilon(1e-8));
  }
  CHECK(is_infinite(p.rate(1.8)));
  CHECK(p.rate(0.0) == doctest::Approx(0.0).epsilon(1e-10));
  const double y0 = 1.2;
  auto f = [&](double e) { return std::abs(e) < 1e-6 ? a * a * e * e / 6.0 : std::log(std::sinh(a * e) / (a * e)); };
  const double ref = legendre_conjugate_oracle(f, Interval{}, y0);
  CHECK(p.rate(y0) == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("tabulated prior validation") {
  CHECK_THROWS_AS(PriorModel::tabulated({0.0, 1.0}, {1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(PriorModel::tabulated({0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(PriorModel::tabulated({0.0, 1.0}, {-1.0, 3.0}), ConfigError);
  const auto dir = oracle::scratch_dir("prior_csv");
  {
    std::ofstream out(dir / "p.csv");
    out << "y,density\n-1,0.5\n1,0.5\n";
  }
  CHECK(PriorModel::load_csv(dir / "p.csv").table_y().size() == 2);
  CHECK_THROWS_AS(PriorModel::load_csv(dir / "missing.csv"), ConfigError);
}

TEST_CASE("information of a field") {
  GridSpec s;
  s.n1 = 4;
  s.n2 = 4;
  const Grid g(s);
  const PriorModel p = PriorModel::gaussian();
  CHECK(information(p, g, g.constant(2.0)) == doctest::Approx(2.0));
  Field q = g.constant(0.0);
  q(3) = -20.0;
  CHECK(is_infinite(information(PriorModel::gamma_skew(0.1), g, q)));
}
