#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qgeq/channel_domain.hpp"
#include "qgeq/common.hpp"

namespace qgeq {

enum class PriorKind { gaussian, gamma_skew, tabulated };

std::string to_string(PriorKind kind);

/// Open interval (lo, hi); either end may be infinite.
struct Interval {
  double lo = -kInfinite;
  double hi = kInfinite;
  bool contains(double v) const { return v > lo && v < hi; }
};

struct Derivs {
  double first = 0.0;
  double second = 0.0;
};

/// One-point prior distribution of small-scale vorticity, represented through
/// its cumulant generating function f(eta) = log E[exp(eta Y)] and the convex
/// conjugate rate i(y) = sup_eta [eta y - f(eta)].
///
/// Built-ins have zero mean and unit variance:
///  - gaussian:    f = eta^2/2, i = y^2/2
///  - gamma_skew:  f = -eta/eps - log(1 - eps eta)/eps^2 on eta < 1/eps,
///                 i = y/eps - log(1 + eps y)/eps^2 on y > -1/eps;
///                 third moment 2 eps, eps = 0 reduces to gaussian.
///  - tabulated:   piecewise-linear density on [y_min, y_max]; f and i are
///                 computed by quadrature and a 1-D root find. The rate is
///                 infinite outside the sampled range (no extrapolation).
///
/// Immutable; copies share tabulated data.
class PriorModel {
 public:
  static PriorModel gaussian();
  static PriorModel gamma_skew(double skew);
  /// Throws ConfigError unless y is strictly increasing, density >= 0 and the
  /// trapezoid mass is 1 within 1e-6.
  static PriorModel tabulated(std::vector<double> y, std::vector<double> density);
  /// Two-column CSV (y, density) with an optional header row.
  static PriorModel load_csv(const std::filesystem::path& path);

  PriorKind kind() const { return kind_; }
  /// Skew parameter eps of the gamma family; 0 for other kinds.
  double skew() const { return skew_; }
  double mean() const { return mean_; }
  Interval eta_domain() const { return eta_domain_; }
  Interval y_domain() const { return y_domain_; }
  /// delta > 0 certifying the tail decay condition, absent when it fails
  /// (the gamma family has an exponential tail).
  std::optional<double> decay_delta() const { return decay_delta_; }

  /// f(eta). Throws DomainError (carrying the violated boundary) outside eta_domain.
  double cgf(double eta) const;
  /// (f', f''). Same domain error.
  Derivs cgf_derivs(double eta) const;
  /// i(y); kInfinite outside y_domain.
  double rate(double y) const;
  /// (i', i''). Throws DomainError outside y_domain.
  Derivs rate_derivs(double y) const;

  // Unchecked hot-path evaluations for solvers that already enforce domains.
  double mean_map(double eta) const;      ///< f'(eta)
  double variance_map(double eta) const;  ///< f''(eta)
  double cgf_unchecked(double eta) const;
  double rate_unchecked(double y) const;
  double rate_curvature(double y) const;  ///< i''(y)

  /// Sampled values of the tabulated density (empty for built-ins).
  const std::vector<double>& table_y() const;
  const std::vector<double>& table_density() const;

 private:
  struct Table;
  PriorModel() = default;

  PriorKind kind_ = PriorKind::gaussian;
  double skew_ = 0.0;
  double mean_ = 0.0;
  Interval eta_domain_;
  Interval y_domain_;
  std::optional<double> decay_delta_;
  std::shared_ptr<const Table> table_;
};

/// Independent numerical Legendre-Fenchel transform sup_eta [eta y - f(eta)]
/// by bracketing plus Brent maximization, using only evaluations of `f` on
/// `eta_domain`. Returns kInfinite when the supremum diverges.
double legendre_conjugate_oracle(const std::function<double(double)>& f, Interval eta_domain, double y);

/// I(q) = integral of i(q(x)); kInfinite if any cell value leaves y_domain.
double information(const PriorModel& prior, const Grid& grid, const Field& q);

}  // namespace qgeq
