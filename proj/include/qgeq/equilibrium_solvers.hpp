#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qgeq/channel_domain.hpp"
#include "qgeq/flow_functionals.hpp"
#include "qgeq/io.hpp"
#include "qgeq/kernels.hpp"
#include "qgeq/prior_models.hpp"

namespace qgeq {

enum class SolveStatus {
  converged,
  not_converged,
  infeasible,  ///< no finite-information field attains (E, Gamma)
  unbounded,   ///< canonical functional unbounded below at (beta, gamma)
};

std::string to_string(SolveStatus s);

enum class Ensemble { canonical, microcanonical };

std::string to_string(Ensemble e);

/// One outer iteration of a solve.
struct IterateRecord {
  int iteration = 0;
  double information = 0.0;
  double energy = 0.0;
  double circulation = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double residual = 0.0;
  double step = 1.0;  ///< accepted damping factor
};

struct EquilibriumState {
  Ensemble ensemble = Ensemble::microcanonical;
  Field q;
  Field psi;
  double beta = 0.0;
  double gamma = 0.0;
  double entropy = -kInfinite;  ///< -I(q)
  double energy = 0.0;
  double circulation = 0.0;
  double meanfield_residual = kInfinite;
  int iterations = 0;
  bool converged = false;
  SolveStatus status = SolveStatus::not_converged;
  std::string message;
  /// Requested constraint values (microcanonical) or multipliers (canonical).
  double target_energy = 0.0;
  double target_circulation = 0.0;
  std::vector<IterateRecord> history;
};

struct SolverOptions {
  int max_outer_iters = 500;
  double constraint_tol = 1e-8;  ///< relative: |H - E| <= tol (1 + |E|)
  double residual_tol = 1e-8;
  double damping = 0.5;          ///< omega in (0, 1]
  int newton_max_iters = 50;
  std::shared_ptr<const EquilibriumState> warm_start;
  Backend backend = Backend::serial;
  bool record_history = true;

  /// Throws ConfigError when a tolerance is non-positive or omega is outside (0, 1].
  void validate() const;
};

/// q0 = b + c0 + c1 cos(pi x2 / l2) with C(q0) = Gamma and H(q0) = E.
/// c0 = Gamma/|X| - c1 mean(cos) keeps the cosine from adding circulation.
struct FeasibleInit {
  Field q;
  double c0 = 0.0;
  double c1 = 0.0;
};

/// std::nullopt when the energy quadratic in c1 has no real root or q0 has
/// infinite information.
std::optional<FeasibleInit> feasible_init(const Grid& grid, const PriorModel& prior, const Topography& topo,
                                          double E, double Gamma);

/// Rescales the mean-free part of `q` so that H = E and C = Gamma. Used for
/// warm starts; std::nullopt when impossible.
std::optional<Field> project_to_shell(const Grid& grid, const PriorModel& prior, const Topography& topo,
                                      const Field& q, double E, double Gamma);

/// ||q - f'(-beta psi - gamma)||; kInfinite if the argument leaves eta_domain.
double meanfield_residual(const EquilibriumState& state, const PriorModel& prior, const Grid& grid);

/// Minimizer of I + beta H + gamma C reached from q = f'(-gamma) (or the warm start).
EquilibriumState solve_canonical(const Grid& grid, const PriorModel& prior, const Topography& topo, double beta,
                                 double gamma, const SolverOptions& opts = {});

/// Minimizer of I subject to H = E, C = Gamma by successive linearization of
/// the energy constraint.
EquilibriumState solve_microcanonical(const Grid& grid, const PriorModel& prior, const Topography& topo, double E,
                                      double Gamma, const SolverOptions& opts = {});

/// Energy of the information minimizer on {C = Gamma} (the constant field):
/// microcanonical multipliers have beta > 0 below it and beta < 0 above.
double infinite_temperature_energy(const Grid& grid, const Topography& topo, double Gamma);

json state_to_json(const EquilibriumState& s, const Grid& grid, const PriorModel& prior);
/// Field dump with columns x1,x2,q,psi.
void write_state_fields_csv(const EquilibriumState& s, const Grid& grid, const std::filesystem::path& path);
/// Iterate history with columns iteration,information,energy,circulation,beta,gamma,residual,step.
void write_history_csv(const EquilibriumState& s, const std::filesystem::path& path);

json grid_to_json(const GridSpec& spec);
json prior_to_json(const PriorModel& prior);

}  // namespace qgeq
