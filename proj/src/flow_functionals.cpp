#include "qgeq/flow_functionals.hpp"

#include <fstream>
#include <numbers>

#include "qgeq/io.hpp"

namespace qgeq {

Topography Topography::none(const Grid& grid) { return {grid.constant(0.0), 0.0}; }

Topography Topography::zonal_sine(const Grid& grid, double amplitude) {
  const double l2 = grid.spec().channel_width;
  Field b = grid.sample([&](double, double x2) { return amplitude * std::sin(2.0 * std::numbers::pi * x2 / l2); });
  return {std::move(b), amplitude};
}

Topography Topography::from_field(const Grid& grid, Field b) {
  grid.require(b, "topography");
  if (!b.allFinite()) throw ConfigError("topography: non-finite values");
  return {std::move(b), 0.0};
}

Field streamfunction(const Grid& grid, const Field& q, const Topography& topo) {
  grid.require(q, "streamfunction");
  grid.require(topo.b, "streamfunction(topography)");
  return apply_green(grid, q - topo.b);
}

double energy(const Grid& grid, const Field& q, const Topography& topo) {
  const Field z = q - topo.b;
  const Field psi = apply_green(grid, z);
  return std::max(0.5 * inner_product(grid, z, psi), 0.0);
}

double circulation(const Grid& grid, const Field& q, const Topography& topo) {
  grid.require(q, "circulation");
  return integral(grid, q - topo.b);
}

double gradient_energy(const Grid& grid, const Field& psi) {
  grid.require(psi, "gradient_energy");
  std::vector<double> c(psi.data(), psi.data() + psi.size());
  grid.forward(c);
  const auto w = grid.parseval_weights();
  const auto g = grid.green_multipliers();
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) sum += w[i] * c[i] * c[i] / g[i];
  return 0.5 * grid.cell_area() * sum;
}

Velocity mean_velocity(const Grid& grid, const Field& psi) {
  grid.require(psi, "mean_velocity");
  const std::size_t n1 = grid.n1(), n2 = grid.n2();
  const double l1 = grid.spec().period_length, l2 = grid.spec().channel_width;

  std::vector<double> coef(psi.data(), psi.data() + psi.size());
  grid.forward(coef);

  // d/dx2: sine mode m -> (m pi / l2) cosine mode m
  std::vector<double> d2 = coef;
  for (std::size_t i2 = 0; i2 < n2; ++i2) {
    const double km = std::numbers::pi * static_cast<double>(i2 + 1) / l2;
    for (std::size_t s = 0; s < n1; ++s) d2[grid.index(s, i2)] *= km;
  }
  grid.backward_cosine(d2);

  // d/dx1 in halfcomplex layout: (re, im) -> k (-im, re); Nyquist dropped
  std::vector<double> d1(coef.size(), 0.0);
  for (std::size_t i2 = 0; i2 < n2; ++i2) {
    for (std::size_t s = 1; 2 * s < n1; ++s) {
      const double k = 2.0 * std::numbers::pi * static_cast<double>(s) / l1;
      const double re = coef[grid.index(s, i2)];
      const double im = coef[grid.index(n1 - s, i2)];
      d1[grid.index(s, i2)] = -k * im;
      d1[grid.index(n1 - s, i2)] = k * re;
    }
  }
  grid.backward_sine(d1);

  Velocity v;
  v.v1 = Eigen::Map<const Field>(d2.data(), static_cast<Eigen::Index>(d2.size()));
  v.v2 = -Eigen::Map<const Field>(d1.data(), static_cast<Eigen::Index>(d1.size()));
  return v;
}

void write_velocity_profile_csv(const Grid& grid, const Field& psi, const std::filesystem::path& path) {
  const Velocity v = mean_velocity(grid, psi);
  CsvWriter csv(path, {"x2", "v1", "psi"});
  const double inv = 1.0 / static_cast<double>(grid.n1());
  for (std::size_t i2 = 0; i2 < grid.n2(); ++i2) {
    double v1 = 0.0, p = 0.0;
    for (std::size_t i1 = 0; i1 < grid.n1(); ++i1) {
      const auto k = static_cast<Eigen::Index>(grid.index(i1, i2));
      v1 += v.v1[k];
      p += psi[k];
    }
    csv.row({grid.x2(i2), v1 * inv, p * inv});
  }
}

}  // namespace qgeq
