#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace qgeq {

/// Cell-midpoint samples of a scalar on the channel, x1 index fastest.
using Field = Eigen::VectorXd;

/// Explicit +infinity marker used for rates and information values outside
/// the prior support. Never produced by overflow; always assigned on purpose.
inline constexpr double kInfinite = std::numeric_limits<double>::infinity();

inline bool is_infinite(double v) { return v == kInfinite; }

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid construction arguments (bad grid spec, malformed prior table, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Field/grid size mismatch.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// Argument outside the open domain of a prior function. `boundary` carries
/// the nearest finite endpoint of the violated interval.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double boundary)
      : Error(what), boundary_(boundary) {}
  double boundary() const { return boundary_; }

 private:
  double boundary_;
};

/// Iterative numerical method failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Geometrically degenerate input (e.g. streamfunction parallel to constants).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

}  // namespace qgeq
