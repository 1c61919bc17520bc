#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "qgeq/equilibrium_solvers.hpp"

namespace qgeq {

/// The operator i''(q) + beta G and its form D2(z1, z2) = int [i''(q) z1 z2 + beta z1 G z2].
class SecondVariation {
 public:
  SecondVariation(Grid grid, Field diag, double beta);

  const Grid& grid() const { return grid_; }
  const Field& diag() const { return diag_; }
  double beta() const { return beta_; }

  Field apply(const Field& z) const;
  double form(const Field& z1, const Field& z2) const;
  /// Matrix of the operator on cell values (symmetric). Intended for modest grids.
  Eigen::MatrixXd dense() const;

 private:
  Grid grid_;
  Field diag_;
  double beta_;
};

/// Throws DomainError if q leaves the prior's y domain.
SecondVariation second_variation(const EquilibriumState& state, const PriorModel& prior, const Grid& grid);

/// Dense eigensolves are used up to this many unknowns, Lanczos beyond.
inline constexpr std::size_t kDenseEigenLimit = 4096;

/// Smallest eigenvalue on all of L2.
double min_eig_full(const SecondVariation& op);
/// Smallest eigenvalue on {z : <psi, z> = 0, <1, z> = 0}.
double min_eig_tangent(const SecondVariation& op, const Field& psi);
/// Smallest eigenvalue of op + sigma psi (x) psi + tau 1 (x) 1 (as forms).
double min_eig_penalized(const SecondVariation& op, const Field& psi, double sigma, double tau);

/// max i''(q) + |beta| / lambda_1.
double nu_bound(const EquilibriumState& state, const PriorModel& prior, const Grid& grid);

struct ArnoldResult {
  Field dqdpsi;  ///< -beta / i''(q)
  double dqdpsi_min = 0.0;
  double dqdpsi_max = 0.0;
  double lambda1 = 0.0;
  bool rayleigh_ok = false;  ///< dq/dpsi < 0 everywhere
  bool arnold2_ok = false;   ///< 0 < dq/dpsi < lambda_1 everywhere
};

ArnoldResult arnold_check(const EquilibriumState& state, const PriorModel& prior, const Grid& grid);

struct Penalization {
  double theta = 0.0;
  double eps_hat = 0.0;
  double K = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
};

/// theta is the smallest eigenvalue of the Gram matrix of psi/|psi| and 1/|1|.
/// Throws DegenerateGeometry when psi vanishes or is parallel to constants,
/// Error when mu_tangent <= 0.
Penalization penalization_constants(const Field& psi, double mu_tangent, double nu, const Grid& grid);

/// Smallest eigenvalue of the penalized second variation.
double verify_penalized_hessian(const EquilibriumState& state, double sigma, double tau, const PriorModel& prior,
                                const Grid& grid);

struct StabilityReport {
  double E = 0.0;
  double Gamma = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  std::size_t unknowns = 0;
  double mu_full = 0.0;
  double mu_tangent = 0.0;
  double nu = 0.0;
  double theta = std::nan("");
  double sigma = std::nan("");
  double tau = std::nan("");
  double penalized_min = std::nan("");
  double dqdpsi_min = 0.0;
  double dqdpsi_max = 0.0;
  double lambda1 = 0.0;
  bool rayleigh_ok = false;
  bool arnold2_ok = false;
  bool canonical_nondegenerate = false;       ///< mu_full > 1e-6 nu
  bool microcanonical_nondegenerate = false;  ///< mu_tangent > 1e-6 nu
  bool lyapunov_penalized_ok = false;
  std::string note;
};

StabilityReport analyze_stability(const EquilibriumState& state, const PriorModel& prior, const Grid& grid);

json stability_to_json(const StabilityReport& r, const Grid& grid);
/// Columns E,Gamma,beta,gamma,mu_full,mu_tangent,nu,theta,sigma,tau,penalized_min,dqdpsi_min,dqdpsi_max,
/// rayleigh_ok,arnold2_ok,canonical_nondegenerate,microcanonical_nondegenerate,lyapunov_penalized_ok.
void write_stability_csv(const std::vector<StabilityReport>& reports, const std::filesystem::path& path);

}  // namespace qgeq
