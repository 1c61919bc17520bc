#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "qgeq/common.hpp"

namespace qgeq {

/// Rossby deformation radius. The infinite case is stored as a flag so that
/// r^-2 is exactly zero (pure Euler dynamics), never a large-r approximation.
class DeformationRadius {
 public:
  static DeformationRadius infinite() { return DeformationRadius(); }
  static DeformationRadius finite(double r);

  bool is_infinite() const { return infinite_; }
  /// +infinity when infinite.
  double value() const { return infinite_ ? kInfinite : r_; }
  double inverse_square() const { return infinite_ ? 0.0 : 1.0 / (r_ * r_); }

  bool operator==(const DeformationRadius&) const = default;

 private:
  DeformationRadius() = default;
  bool infinite_ = true;
  double r_ = 0.0;
};

/// Channel |x1| < l1/2 (periodic), |x2| < l2/2 (walls), uniform cells.
struct GridSpec {
  double period_length = 1.0;
  double channel_width = 1.0;
  std::size_t n1 = 64;  ///< cells along the periodic direction
  std::size_t n2 = 64;  ///< cells across the channel
  DeformationRadius radius = DeformationRadius::infinite();

  bool operator==(const GridSpec&) const = default;
};

/// Throws ConfigError when a GridSpec violates its invariants. n1 = 1 is the
/// zonal fast path (fields independent of x1); otherwise both resolutions are
/// powers of two and at least 2.
void validate(const GridSpec& spec);

/// Discretized channel with the spectral Green operator of -Lap + r^-2
/// (Fourier in x1, sine basis sin(m pi (x2 + l2/2)/l2) in x2).
///
/// Immutable after construction; copies share the transform plans. All member
/// functions are safe to call concurrently.
class Grid {
 public:
  explicit Grid(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  std::size_t n1() const { return spec_.n1; }
  std::size_t n2() const { return spec_.n2; }
  std::size_t size() const { return spec_.n1 * spec_.n2; }
  double cell_area() const { return cell_area_; }
  double area() const { return spec_.period_length * spec_.channel_width; }

  std::size_t index(std::size_t i1, std::size_t i2) const { return i2 * spec_.n1 + i1; }
  double x1(std::size_t i1) const;
  double x2(std::size_t i2) const;

  /// Non-negative x1 wavenumber index held in halfcomplex slot `slot`.
  std::size_t wavenumber_index(std::size_t slot) const;
  /// Eigenvalue (2 pi k/l1)^2 + (m pi/l2)^2 + r^-2 for k >= 0, m >= 1.
  double mode_eigenvalue(std::size_t k, std::size_t m) const;
  /// Smallest eigenvalue (pi/l2)^2 + r^-2.
  double lambda_min() const { return lambda_min_; }

  /// Green multipliers in coefficient layout: entry index(slot, m-1).
  std::span<const double> green_multipliers() const { return green_; }
  /// Parseval weights: sum_j X_j^2 == sum_modes w * Y^2 for unnormalized
  /// forward coefficients Y, same layout as green_multipliers().
  std::span<const double> parseval_weights() const { return parseval_; }

  /// In place: physical values -> unnormalized (halfcomplex x DST-II) coefficients.
  void forward(std::span<double> data) const;
  /// In place: coefficients from forward() -> physical values (normalized).
  void backward_sine(std::span<double> data) const;
  /// In place: coefficients laid out as for forward(), scaled by the caller,
  /// synthesized on the cosine basis cos(m pi (x2 + l2/2)/l2), m = slot + 1.
  /// Used for d/dx2 of a sine series.
  void backward_cosine(std::span<double> data) const;

  Field constant(double c) const { return Field::Constant(static_cast<Eigen::Index>(size()), c); }
  Field sample(const std::function<double(double, double)>& fn) const;
  bool matches(const Field& f) const { return static_cast<std::size_t>(f.size()) == size(); }
  void require(const Field& f, const char* what) const;

 private:
  struct Plans;
  GridSpec spec_;
  double cell_area_ = 0.0;
  double lambda_min_ = 0.0;
  std::vector<double> green_;
  std::vector<double> parseval_;
  std::shared_ptr<const Plans> plans_;
};

Grid build_grid(const GridSpec& spec);

/// psi = G z: solves (-Lap + r^-2) psi = z, psi = 0 at the walls, periodic in x1.
Field apply_green(const Grid& grid, const Field& z);
/// Same, writing into `out` (resized as needed); no other allocation.
void apply_green(const Grid& grid, const Field& z, Field& out);

/// Midpoint rule: cell_area * sum a_i b_i.
double inner_product(const Grid& grid, const Field& a, const Field& b);
double l2_norm(const Grid& grid, const Field& a);
/// Midpoint rule for the integral of a.
double integral(const Grid& grid, const Field& a);

double lambda_min(const Grid& grid);

/// True when every row of `f` is constant in x1 to `tol` (absolute).
bool is_zonal(const Grid& grid, const Field& f, double tol = 0.0);

}  // namespace qgeq
