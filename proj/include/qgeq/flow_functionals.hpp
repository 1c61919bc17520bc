#pragma once

#include <filesystem>
#include <utility>

#include "qgeq/channel_domain.hpp"

namespace qgeq {

/// Inhomogeneous term b in q = -Lap psi + r^-2 psi + b.
struct Topography {
  Field b;
  double amplitude = 0.0;  ///< B2 for the zonal sinusoid; 0 otherwise

  static Topography none(const Grid& grid);
  /// b = B2 sin(2 pi x2 / l2): zonal, second cross-channel harmonic.
  static Topography zonal_sine(const Grid& grid, double amplitude);
  static Topography from_field(const Grid& grid, Field b);
};

/// psi = G(q - b).
Field streamfunction(const Grid& grid, const Field& q, const Topography& topo);

/// H(q) = 1/2 <q - b, G(q - b)>; always >= 0.
double energy(const Grid& grid, const Field& q, const Topography& topo);

/// C(q) = integral of (q - b).
double circulation(const Grid& grid, const Field& q, const Topography& topo);

/// 1/2 integral(|grad psi|^2 + r^-2 psi^2) evaluated on the spectral
/// coefficients of psi. Independent route to the same energy.
double gradient_energy(const Grid& grid, const Field& psi);

struct Velocity {
  Field v1;  ///< d psi / d x2
  Field v2;  ///< -d psi / d x1
};

/// Spectral differentiation of a wall-vanishing streamfunction.
Velocity mean_velocity(const Grid& grid, const Field& psi);

/// Writes the x1-averaged profile as CSV with header `x2,v1,psi`.
void write_velocity_profile_csv(const Grid& grid, const Field& psi, const std::filesystem::path& path);

}  // namespace qgeq
