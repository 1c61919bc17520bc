#include "qgeq/equilibrium_solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <boost/math/tools/roots.hpp>

namespace qgeq {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::not_converged: return "not_converged";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

std::string to_string(Ensemble e) { return e == Ensemble::canonical ? "canonical" : "microcanonical"; }

void SolverOptions::validate() const {
  if (max_outer_iters <= 0) throw ConfigError("solver: max_outer_iters must be positive");
  if (!(constraint_tol > 0.0)) throw ConfigError("solver: constraint_tol must be positive");
  if (!(residual_tol > 0.0)) throw ConfigError("solver: residual_tol must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("solver: damping must lie in (0, 1]");
  if (newton_max_iters <= 0) throw ConfigError("solver: newton_max_iters must be positive");
}

namespace {

double mean_of(const Grid& grid, const Field& f) { return integral(grid, f) / grid.area(); }

// Roots of a c^2 + b c + k = 0 (a > 0), largest first.
std::optional<std::pair<double, double>> quadratic_roots(double a, double b, double k) {
  const double disc = b * b - 4.0 * a * k;
  if (!(a > 0.0) || disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  // stable form
  const double t = -0.5 * (b + std::copysign(s, b));
  double r1 = t / a;
  double r2 = t != 0.0 ? k / t : r1;
  if (r1 < r2) std::swap(r1, r2);
  return std::make_pair(r1, r2);
}

// Coefficients of H(b + u0 + c d) = a c^2 + lin c + h0 for constant u0.
struct EnergyQuadratic {
  double a, lin, h0;
};

EnergyQuadratic energy_quadratic(const Grid& grid, const Field& d, double u0) {
  const Field gd = apply_green(grid, d);
  const Field g0 = apply_green(grid, grid.constant(u0));
  return {0.5 * inner_product(grid, d, gd), inner_product(grid, d, g0), 0.5 * u0 * integral(grid, g0)};
}

// Changes of I below this relative size are round-off in the summed
// information and count as ties for the monotone safeguard.
constexpr double kInformationTie = 1e-11;
// Outer iterations without halving the best residual before switching method.
constexpr int kStallWindow = 25;

struct Snapshot {
  Field psi;
  double H = 0.0, C = 0.0, I = 0.0;
};

Snapshot evaluate(const Grid& grid, const PriorModel& prior, const Topography& topo, const Field& q, Backend be) {
  Snapshot s;
  const Field z = q - topo.b;
  apply_green(grid, z, s.psi);
  s.H = std::max(0.5 * inner_product(grid, z, s.psi), 0.0);
  s.C = integral(grid, z);
  s.I = information_sum(be, prior, grid, q);
  return s;
}

double residual_norm(const Grid& grid, const PriorModel& prior, const Field& q, const Field& psi, double beta,
                     double gamma, Backend be) {
  Field m;
  if (!mean_field_map(be, prior, psi, beta, gamma, m)) return kInfinite;
  return l2_norm(grid, q - m);
}

// ---- multiplier subproblem -------------------------------------------------
//
// Maximizes the concave dual D(beta, gamma) = -int f(-beta psi - gamma) - beta t1 - gamma t2,
// whose stationarity conditions are <psi, q> = t1 and int q = t2 for
// q = f'(-beta psi - gamma).

struct Multipliers {
  bool ok = false;
  double beta = 0.0;
  double gamma = 0.0;
  double gradient = kInfinite;
};

struct DualProblem {
  Backend be;
  const PriorModel& prior;
  const Grid& grid;
  const Field& psi;
  double t1, t2;

  TiltedMoments moments(double beta, double gamma) const {
    return tilted_moments(be, prior, grid, psi, beta, gamma);
  }
  double value(const TiltedMoments& m, double beta, double gamma) const {
    if (!m.in_domain) return -kInfinite;
    return -m.f - beta * t1 - gamma * t2;
  }
  double scale() const { return 1.0 + std::abs(t1) + std::abs(t2); }
};

Multipliers dual_newton(const DualProblem& p, double beta, double gamma, int max_iters) {
  const double tol = 1e-12 * p.scale();
  TiltedMoments m = p.moments(beta, gamma);
  if (!m.in_domain) {
    beta = 0.0;
    gamma = 0.0;
    m = p.moments(beta, gamma);
    if (!m.in_domain) return {};
  }
  double D = p.value(m, beta, gamma);
  for (int it = 0; it < max_iters; ++it) {
    const double g0 = m.q_psi - p.t1, g1 = m.q_one - p.t2;
    const double gn = std::max(std::abs(g0), std::abs(g1));
    if (gn <= tol) return {true, beta, gamma, gn};
    const double det = m.w_pp * m.w_11 - m.w_p1 * m.w_p1;
    if (!(det > 0.0)) return {false, beta, gamma, gn};
    const double d0 = (m.w_11 * g0 - m.w_p1 * g1) / det;
    const double d1 = (m.w_pp * g1 - m.w_p1 * g0) / det;
    const double slope = g0 * d0 + g1 * d1;
    double s = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
      const double nb = beta + s * d0, ng = gamma + s * d1;
      TiltedMoments mt = p.moments(nb, ng);
      const double Dt = p.value(mt, nb, ng);
      // near the optimum D is flat to round-off; a shrinking gradient decides
      const bool shrinks = mt.in_domain && std::max(std::abs(mt.q_psi - p.t1), std::abs(mt.q_one - p.t2)) <=
                                               (1.0 - 1e-4 * s) * gn;
      if (Dt >= D + 1e-4 * s * slope || shrinks) {
        beta = nb;
        gamma = ng;
        m = mt;
        D = Dt;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // round-off floor: accept if the gradient is already tiny
      return {gn <= 1e-9 * p.scale(), beta, gamma, gn};
    }
  }
  const double gn = std::max(std::abs(m.q_psi - p.t1), std::abs(m.q_one - p.t2));
  return {gn <= 1e-9 * p.scale(), beta, gamma, gn};
}

// Root of a decreasing function known at an in-domain point x0. `fn` returns
// nullopt outside the (interval) domain; outside values are treated as
// +inf below x0 and -inf above it.
std::optional<double> decreasing_root(const std::function<std::optional<double>(double)>& fn, double x0) {
  const auto v0 = fn(x0);
  if (!v0) return std::nullopt;
  if (*v0 == 0.0) return x0;
  auto signed_value = [&](double x) {
    const auto v = fn(x);
    if (v) return *v;
    return x < x0 ? kInfinite : -kInfinite;
  };
  double lo = x0, hi = x0;
  double step = std::max(1.0, std::abs(x0));
  if (*v0 > 0.0) {
    for (int i = 0; i < 200 && signed_value(hi) > 0.0; ++i, step *= 2.0) hi = x0 + step;
    if (signed_value(hi) > 0.0) return std::nullopt;
  } else {
    for (int i = 0; i < 200 && signed_value(lo) < 0.0; ++i, step *= 2.0) lo = x0 - step;
    if (signed_value(lo) < 0.0) return std::nullopt;
  }
  boost::math::tools::eps_tolerance<double> tol(50);
  const auto r = boost::math::tools::bisect(signed_value, lo, hi, tol);
  return 0.5 * (r.first + r.second);
}

// Fallback: exact coordinate maximization in gamma, then beta, repeated.
Multipliers alternating_bisection(const DualProblem& p, double beta, double gamma) {
  if (!p.moments(beta, gamma).in_domain) {
    beta = 0.0;
    gamma = 0.0;
  }
  const double tol = 1e-11 * p.scale();
  double gn = kInfinite;
  for (int sweep = 0; sweep < 500; ++sweep) {
    const auto g = decreasing_root(
        [&](double x) -> std::optional<double> {
          const auto m = p.moments(beta, x);
          if (!m.in_domain) return std::nullopt;
          return m.q_one - p.t2;
        },
        gamma);
    if (!g) return {false, beta, gamma, gn};
    gamma = *g;
    const auto b = decreasing_root(
        [&](double x) -> std::optional<double> {
          const auto m = p.moments(x, gamma);
          if (!m.in_domain) return std::nullopt;
          return m.q_psi - p.t1;
        },
        beta);
    if (!b) return {false, beta, gamma, gn};
    beta = *b;
    const auto m = p.moments(beta, gamma);
    gn = std::max(std::abs(m.q_psi - p.t1), std::abs(m.q_one - p.t2));
    if (gn <= tol) return {true, beta, gamma, gn};
  }
  return {gn <= 1e-9 * p.scale(), beta, gamma, gn};
}

Multipliers solve_multipliers(const DualProblem& p, double beta, double gamma, int newton_iters) {
  Multipliers m = dual_newton(p, beta, gamma, newton_iters);
  if (m.ok) return m;
  return alternating_bisection(p, m.beta, m.gamma);
}

void fill_state(EquilibriumState& st, const Grid& grid, const PriorModel& prior, const Topography& topo,
                const Field& q, double beta, double gamma, Backend be) {
  const Snapshot s = evaluate(grid, prior, topo, q, be);
  st.q = q;
  st.psi = s.psi;
  st.beta = beta;
  st.gamma = gamma;
  st.energy = s.H;
  st.circulation = s.C;
  st.entropy = is_infinite(s.I) ? -kInfinite : -s.I;
  st.meanfield_residual = residual_norm(grid, prior, q, s.psi, beta, gamma, be);
}

// Conjugate gradients on (diag + beta G) x = rhs; stops early on negative curvature.
Field newton_cg(const Grid& grid, const Field& diag, double beta, const Field& rhs, int max_iters) {
  Field x = Field::Zero(rhs.size());
  Field r = rhs, p = rhs, Ap;
  double rr = inner_product(grid, r, r);
  const double stop = 1e-24 * std::max(rr, 1e-300);
  for (int it = 0; it < max_iters && rr > stop; ++it) {
    apply_green(grid, p, Ap);
    Ap = diag.cwiseProduct(p) + beta * Ap;
    const double pAp = inner_product(grid, p, Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const double rr_new = inner_product(grid, r, r);
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return x;
}

// With beta > 0 the constrained problem is convex and its multipliers
// maximize min_q [I + beta H + gamma C] - beta E - gamma Gamma, whose gradient
// is (H - E, C - Gamma) at the canonical minimizer. Newton on (beta, gamma),
// with the Jacobian from (i'' + beta G)^{-1} applied to psi and 1.
bool positive_dual_ascent(const Grid& grid, const PriorModel& prior, const Topography& topo, double E, double Gamma,
                          const SolverOptions& opts, EquilibriumState& st, Field& q, double& beta, double& gamma,
                          int& iterations) {
  if (!(beta > 0.0)) return false;
  SolverOptions inner = opts;
  inner.record_history = false;
  auto solve_at = [&](double b, double g, const Field& start) -> std::optional<EquilibriumState> {
    auto ws = std::make_shared<EquilibriumState>();
    ws->q = start;
    inner.warm_start = ws;
    EquilibriumState s = solve_canonical(grid, prior, topo, b, g, inner);
    if (!s.converged) return std::nullopt;
    return s;
  };
  auto gap = [&](const EquilibriumState& s) {
    return std::hypot((s.energy - E) / (1.0 + std::abs(E)), (s.circulation - Gamma) / (1.0 + std::abs(Gamma)));
  };
  std::optional<EquilibriumState> cur = solve_at(beta, gamma, q);
  if (!cur) return false;
  const Field one = grid.constant(1.0);
  Field diag(q.size());
  for (int k = 0; k < 100; ++k) {
    const double gE = cur->energy - E, gC = cur->circulation - Gamma;
    ++iterations;
    if (opts.record_history) {
      st.history.push_back({iterations, -cur->entropy, cur->energy, cur->circulation, cur->beta, cur->gamma,
                            cur->meanfield_residual, 1.0});
    }
    if (std::abs(gE) <= opts.constraint_tol * (1.0 + std::abs(E)) &&
        std::abs(gC) <= opts.constraint_tol * (1.0 + std::abs(Gamma))) {
      q = cur->q;
      beta = cur->beta;
      gamma = cur->gamma;
      return true;
    }
    for (Eigen::Index i = 0; i < diag.size(); ++i) diag[i] = prior.rate_derivs(cur->q[i]).second;
    const Field u = newton_cg(grid, diag, cur->beta, cur->psi, 500);
    const Field v = newton_cg(grid, diag, cur->beta, one, 500);
    const double a = -inner_product(grid, cur->psi, u);
    const double b = -inner_product(grid, cur->psi, v);
    const double d = -integral(grid, v);
    const double det = a * d - b * b;
    if (!(det > 0.0)) return false;
    const double db = (-gE * d + gC * b) / det;
    const double dg = (-gC * a + gE * b) / det;
    const double g0 = gap(*cur);
    bool accepted = false;
    double s = 1.0;
    for (int ls = 0; ls < 30; ++ls, s *= 0.5) {
      const double nb = cur->beta + s * db;
      if (!(nb > 0.0)) continue;
      auto next = solve_at(nb, cur->gamma + s * dg, cur->q);
      if (next && gap(*next) < (1.0 - 1e-4 * s) * g0) {
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  return false;
}

}  // namespace

double infinite_temperature_energy(const Grid& grid, const Topography& topo, double Gamma) {
  const double c = (Gamma + integral(grid, topo.b)) / grid.area();
  return energy(grid, grid.constant(c), topo);
}

std::optional<FeasibleInit> feasible_init(const Grid& grid, const PriorModel& prior, const Topography& topo,
                                          double E, double Gamma) {
  const double l2 = grid.spec().channel_width;
  const Field phi = grid.sample([&](double, double x2) { return std::cos(std::numbers::pi * x2 / l2); });
  const double phi_mean = mean_of(grid, phi);
  const Field d = phi.array() - phi_mean;
  const double u0 = Gamma / grid.area();
  const EnergyQuadratic eq = energy_quadratic(grid, d, u0);
  const auto roots = quadratic_roots(eq.a, eq.lin, eq.h0 - E);
  if (!roots) return std::nullopt;
  FeasibleInit init;
  init.c1 = roots->first;
  init.c0 = u0 - init.c1 * phi_mean;
  init.q = topo.b + grid.constant(init.c0) + init.c1 * phi;
  if (is_infinite(information(prior, grid, init.q))) return std::nullopt;
  return init;
}

std::optional<Field> project_to_shell(const Grid& grid, const PriorModel& prior, const Topography& topo,
                                      const Field& q, double E, double Gamma) {
  grid.require(q, "project_to_shell");
  Field d = q - topo.b;
  d.array() -= mean_of(grid, d);
  if (l2_norm(grid, d) < 1e-12) return std::nullopt;
  const double u0 = Gamma / grid.area();
  const EnergyQuadratic eq = energy_quadratic(grid, d, u0);
  const auto roots = quadratic_roots(eq.a, eq.lin, eq.h0 - E);
  if (!roots) return std::nullopt;
  // the root nearest 1 changes the shape least
  const double s = std::abs(roots->first - 1.0) <= std::abs(roots->second - 1.0) ? roots->first : roots->second;
  Field out = topo.b + grid.constant(u0) + s * d;
  if (is_infinite(information(prior, grid, out))) return std::nullopt;
  return out;
}

double meanfield_residual(const EquilibriumState& state, const PriorModel& prior, const Grid& grid) {
  grid.require(state.q, "meanfield_residual");
  grid.require(state.psi, "meanfield_residual(psi)");
  return residual_norm(grid, prior, state.q, state.psi, state.beta, state.gamma, Backend::serial);
}

EquilibriumState solve_microcanonical(const Grid& grid, const PriorModel& prior, const Topography& topo, double E,
                                      double Gamma, const SolverOptions& opts) {
  opts.validate();
  if (!std::isfinite(E) || !std::isfinite(Gamma)) throw ConfigError("microcanonical: E and Gamma must be finite");
  if (!(E > 0.0)) throw ConfigError("microcanonical: E must be positive");
  grid.require(topo.b, "microcanonical(topography)");
  const Backend be = opts.backend;

  EquilibriumState st;
  st.ensemble = Ensemble::microcanonical;
  st.target_energy = E;
  st.target_circulation = Gamma;

  std::optional<Field> start;
  double beta = 0.0, gamma = 0.0;
  if (opts.warm_start && grid.matches(opts.warm_start->q)) {
    start = project_to_shell(grid, prior, topo, opts.warm_start->q, E, Gamma);
    if (start && std::isfinite(opts.warm_start->beta) && std::isfinite(opts.warm_start->gamma)) {
      beta = opts.warm_start->beta;
      gamma = opts.warm_start->gamma;
    }
  }
  if (!start) {
    if (auto init = feasible_init(grid, prior, topo, E, Gamma)) start = std::move(init->q);
  }
  if (!start) {
    st.status = SolveStatus::infeasible;
    st.message = "no feasible initial field at this (E, Gamma)";
    return st;
  }

  Field q = *start;
  Snapshot snap = evaluate(grid, prior, topo, q, be);
  // beta < 0 above the infinite-temperature energy: damping keeps I monotone.
  // Below it the multiplier is positive and lowering H costs information, so
  // the full linearized step is taken.
  const bool monotone = E >= infinite_temperature_energy(grid, topo, Gamma);
  const double t2 = Gamma + integral(grid, topo.b);
  if (opts.record_history) {
    st.history.push_back({0, snap.I, snap.H, snap.C, beta, gamma,
                          residual_norm(grid, prior, q, snap.psi, beta, gamma, be), 1.0});
  }

  double prev_res = kInfinite, best_res = kInfinite;
  int growth = 0, last_gain = 0;
  double relax = 1.0;
  Field qs;
  for (int k = 1; k <= opts.max_outer_iters; ++k) {
    const double t1 = E - snap.H + inner_product(grid, snap.psi, q);
    const DualProblem dual{be, prior, grid, snap.psi, t1, t2};
    const Multipliers mult = solve_multipliers(dual, beta, gamma, opts.newton_max_iters);
    if (!mult.ok) {
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k - 1;
      st.status = SolveStatus::infeasible;
      st.message = "multiplier subproblem has no solution (gradient " + format_double(mult.gradient) + ")";
      return st;
    }
    beta = mult.beta;
    gamma = mult.gamma;
    mean_field_map(be, prior, snap.psi, beta, gamma, qs);

    double theta = relax;
    Field trial = q + theta * (qs - q);
    double trial_I = information_sum(be, prior, grid, trial);
    if (monotone) {
      const double limit = snap.I + kInformationTie * (1.0 + std::abs(snap.I));
      while (!(trial_I <= limit) && theta > 1e-12) {
        theta *= 0.5;
        trial = q + theta * (qs - q);
        trial_I = information_sum(be, prior, grid, trial);
      }
      if (!(trial_I <= limit)) {
        fill_state(st, grid, prior, topo, q, beta, gamma, be);
        st.iterations = k - 1;
        st.status = SolveStatus::not_converged;
        st.message = "damping could not decrease the information";
        return st;
      }
    } else if (is_infinite(trial_I)) {
      while (is_infinite(trial_I) && theta > 1e-12) {
        theta *= 0.5;
        trial = q + theta * (qs - q);
        trial_I = information_sum(be, prior, grid, trial);
      }
    }
    q = std::move(trial);
    snap = evaluate(grid, prior, topo, q, be);
    const double res = residual_norm(grid, prior, q, snap.psi, beta, gamma, be);
    if (opts.record_history) st.history.push_back({k, snap.I, snap.H, snap.C, beta, gamma, res, theta});

    // Undamped iteration that keeps growing its residual is relaxed.
    if (!monotone) {
      growth = res > prev_res ? growth + 1 : 0;
      if (growth >= 3 && relax > opts.damping) {
        relax = opts.damping;
        growth = 0;
      }
    }
    prev_res = res;
    if (res < 0.5 * best_res) {
      best_res = res;
      last_gain = k;
    }

    const bool energy_ok = std::abs(snap.H - E) <= opts.constraint_tol * (1.0 + std::abs(E));
    const bool circ_ok = std::abs(snap.C - Gamma) <= opts.constraint_tol * (1.0 + std::abs(Gamma));
    if (energy_ok && circ_ok && res <= opts.residual_tol) {
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k;
      st.converged = true;
      st.status = SolveStatus::converged;
      return st;
    }
    // stalled or cycling at positive temperature
    if (!monotone && (k - last_gain >= kStallWindow || k == opts.max_outer_iters)) {
      int iters = k;
      Field qd = q;
      double bd = beta, gd = gamma;
      if (positive_dual_ascent(grid, prior, topo, E, Gamma, opts, st, qd, bd, gd, iters)) {
        fill_state(st, grid, prior, topo, qd, bd, gd, be);
        st.iterations = iters;
        st.converged = true;
        st.status = SolveStatus::converged;
        return st;
      }
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k;
      st.status = SolveStatus::not_converged;
      st.message = "positive-temperature iteration stalled and the dual Newton fallback failed";
      return st;
    }
  }
  fill_state(st, grid, prior, topo, q, beta, gamma, be);
  st.iterations = opts.max_outer_iters;
  st.status = SolveStatus::not_converged;
  st.message = "outer iteration limit reached";
  return st;
}

EquilibriumState solve_canonical(const Grid& grid, const PriorModel& prior, const Topography& topo, double beta,
                                 double gamma, const SolverOptions& opts) {
  opts.validate();
  if (!std::isfinite(beta) || !std::isfinite(gamma)) throw ConfigError("canonical: beta and gamma must be finite");
  grid.require(topo.b, "canonical(topography)");
  const Backend be = opts.backend;

  EquilibriumState st;
  st.ensemble = Ensemble::canonical;
  st.target_energy = beta;
  st.target_circulation = gamma;
  st.beta = beta;
  st.gamma = gamma;

  Field q;
  if (opts.warm_start && grid.matches(opts.warm_start->q) &&
      !is_infinite(information(prior, grid, opts.warm_start->q))) {
    q = opts.warm_start->q;
  } else {
    const double eta = -gamma;
    q = grid.constant(prior.eta_domain().contains(eta) ? prior.mean_map(eta) : prior.mean());
  }

  auto objective = [&](const Snapshot& s) { return s.I + beta * s.H + gamma * s.C; };
  Snapshot snap = evaluate(grid, prior, topo, q, be);
  double J = objective(snap);
  const double J0 = J;
  Field qs, grad(q.size()), diag(q.size());
  if (opts.record_history) {
    st.history.push_back({0, snap.I, snap.H, snap.C, beta, gamma,
                          residual_norm(grid, prior, q, snap.psi, beta, gamma, be), 1.0});
  }

  auto unbounded = [&](int k) {
    fill_state(st, grid, prior, topo, q, beta, gamma, be);
    st.iterations = k;
    st.status = SolveStatus::unbounded;
    st.message = "no canonical minimizer at (beta, gamma)";
    return st;
  };

  for (int k = 1; k <= opts.max_outer_iters; ++k) {
    const bool in_domain = mean_field_map(be, prior, snap.psi, beta, gamma, qs);
    // With beta < 0, J lies below its linearization in H, whose infimum is
    // -infinity once -beta psi - gamma leaves the domain.
    if (!in_domain && beta < 0.0) return unbounded(k - 1);

    for (Eigen::Index i = 0; i < q.size(); ++i) {
      const Derivs d = prior.rate_derivs(q[i]);
      grad[i] = d.first + beta * snap.psi[i] + gamma;
      diag[i] = d.second;
    }
    const double res = in_domain ? l2_norm(grid, q - qs) : kInfinite;
    if (res <= opts.residual_tol) {
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k - 1;
      st.converged = true;
      st.status = SolveStatus::converged;
      return st;
    }

    // Search direction: Newton (CG on i'' + beta G) close to a solution,
    // otherwise the fixed-point direction f'(-beta psi - gamma) - q, or the
    // negative gradient when that is unavailable.
    Field dir;
    if (in_domain) dir = qs - q;
    else dir = -grad;
    if (res < 1e-2) {
      Field nd = newton_cg(grid, diag, beta, -grad, 200);
      if (inner_product(grid, grad, nd) < 0.0) dir = std::move(nd);
    }
    const double slope = inner_product(grid, grad, dir);
    if (!(slope < 0.0)) {
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k - 1;
      st.status = SolveStatus::not_converged;
      st.message = "no descent direction";
      return st;
    }
    double theta = 1.0;
    bool accepted = false;
    Snapshot ts;
    Field trial;
    for (int ls = 0; ls < 60; ++ls, theta *= 0.5) {
      trial = q + theta * dir;
      ts = evaluate(grid, prior, topo, trial, be);
      const double Jt = objective(ts);
      // J is flat to round-off near the minimizer; a shrinking residual decides
      const bool shrinks = res < 1e-6 && std::isfinite(Jt) &&
                           residual_norm(grid, prior, trial, ts.psi, beta, gamma, be) <= (1.0 - 1e-4 * theta) * res;
      if (std::isfinite(Jt) && (Jt <= J + 1e-4 * theta * slope || shrinks)) {
        accepted = true;
        J = Jt;
        break;
      }
    }
    if (!accepted) {
      fill_state(st, grid, prior, topo, q, beta, gamma, be);
      st.iterations = k - 1;
      st.status = SolveStatus::not_converged;
      st.message = "line search failed";
      return st;
    }
    q = std::move(trial);
    snap = std::move(ts);
    if (opts.record_history) {
      st.history.push_back({k, snap.I, snap.H, snap.C, beta, gamma,
                            residual_norm(grid, prior, q, snap.psi, beta, gamma, be), theta});
    }
    if (J < J0 - 1e12) return unbounded(k);
  }
  fill_state(st, grid, prior, topo, q, beta, gamma, be);
  st.iterations = opts.max_outer_iters;
  st.converged = st.meanfield_residual <= opts.residual_tol;
  st.status = st.converged ? SolveStatus::converged : SolveStatus::not_converged;
  if (!st.converged) st.message = "outer iteration limit reached";
  return st;
}

json grid_to_json(const GridSpec& spec) {
  json j;
  j["period_length"] = spec.period_length;
  j["channel_width"] = spec.channel_width;
  j["n1"] = spec.n1;
  j["n2"] = spec.n2;
  if (spec.radius.is_infinite()) j["radius"] = "inf";
  else j["radius"] = spec.radius.value();
  return j;
}

json prior_to_json(const PriorModel& prior) {
  json j;
  j["kind"] = to_string(prior.kind());
  if (prior.kind() == PriorKind::gamma_skew) j["epsilon"] = prior.skew();
  if (prior.kind() == PriorKind::tabulated) j["points"] = prior.table_y().size();
  return j;
}

namespace {
json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}
}  // namespace

json state_to_json(const EquilibriumState& s, const Grid& grid, const PriorModel& prior) {
  json j;
  j["format"] = kFormatVersion;
  j["ensemble"] = to_string(s.ensemble);
  j["status"] = to_string(s.status);
  j["converged"] = s.converged;
  j["grid"] = grid_to_json(grid.spec());
  j["prior"] = prior_to_json(prior);
  if (s.ensemble == Ensemble::microcanonical) {
    j["target"] = {{"E", s.target_energy}, {"Gamma", s.target_circulation}};
  } else {
    j["target"] = {{"beta", s.target_energy}, {"gamma", s.target_circulation}};
  }
  j["E"] = s.energy;
  j["Gamma"] = s.circulation;
  j["beta"] = s.beta;
  j["gamma"] = s.gamma;
  j["S"] = finite_or_string(s.entropy);
  j["meanfield_residual"] = finite_or_string(s.meanfield_residual);
  j["energy_error"] = s.ensemble == Ensemble::microcanonical ? s.energy - s.target_energy : 0.0;
  j["circulation_error"] = s.ensemble == Ensemble::microcanonical ? s.circulation - s.target_circulation : 0.0;
  j["iterations"] = s.iterations;
  j["message"] = s.message;
  return j;
}

void write_state_fields_csv(const EquilibriumState& s, const Grid& grid, const std::filesystem::path& path) {
  grid.require(s.q, "write_state_fields_csv");
  CsvWriter csv(path, {"x1", "x2", "q", "psi"});
  for (std::size_t i2 = 0; i2 < grid.n2(); ++i2) {
    for (std::size_t i1 = 0; i1 < grid.n1(); ++i1) {
      const auto k = static_cast<Eigen::Index>(grid.index(i1, i2));
      csv.row({grid.x1(i1), grid.x2(i2), s.q[k], s.psi.size() ? s.psi[k] : 0.0});
    }
  }
}

void write_history_csv(const EquilibriumState& s, const std::filesystem::path& path) {
  CsvWriter csv(path, {"iteration", "information", "energy", "circulation", "beta", "gamma", "residual", "step"});
  for (const auto& r : s.history) {
    csv.row({static_cast<std::int64_t>(r.iteration), r.information, r.energy, r.circulation, r.beta, r.gamma,
             r.residual, r.step});
  }
}

}  // namespace qgeq
