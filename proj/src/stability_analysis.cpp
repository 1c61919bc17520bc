#include "qgeq/stability_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace qgeq {

SecondVariation::SecondVariation(Grid grid, Field diag, double beta)
    : grid_(std::move(grid)), diag_(std::move(diag)), beta_(beta) {
  grid_.require(diag_, "second_variation");
}

Field SecondVariation::apply(const Field& z) const {
  grid_.require(z, "SecondVariation::apply");
  Field gz;
  apply_green(grid_, z, gz);
  return diag_.cwiseProduct(z) + beta_ * gz;
}

double SecondVariation::form(const Field& z1, const Field& z2) const { return inner_product(grid_, z1, apply(z2)); }

Eigen::MatrixXd SecondVariation::dense() const {
  const auto n = static_cast<Eigen::Index>(grid_.size());
  Eigen::MatrixXd A(n, n);
  Field e = Field::Zero(n), col;
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    apply_green(grid_, e, col);
    A.col(j) = beta_ * col;
    e[j] = 0.0;
  }
  A = 0.5 * (A + A.transpose()).eval();
  A.diagonal() += diag_;
  return A;
}

SecondVariation second_variation(const EquilibriumState& state, const PriorModel& prior, const Grid& grid) {
  grid.require(state.q, "second_variation");
  Field d(state.q.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = prior.rate_derivs(state.q[i]).second;
  return SecondVariation(grid, std::move(d), state.beta);
}

namespace {

double dense_min(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed");
  return es.eigenvalues().minCoeff();
}

// Lanczos with full reorthogonalization on a symmetric operator; `project`
// (optional) restricts to a subspace that the operator preserves.
double lanczos_min(const std::function<Field(const Field&)>& op, Eigen::Index n,
                   const std::function<void(Field&)>& project) {
  const Eigen::Index m = std::min<Eigen::Index>(n, 300);
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  Field v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  if (project) project(v);
  v.normalize();
  Eigen::MatrixXd V(n, m);
  std::vector<double> alpha, beta;
  double prev = kInfinite;
  for (Eigen::Index k = 0; k < m; ++k) {
    V.col(k) = v;
    Field w = op(v);
    if (project) project(w);
    const double a = v.dot(w);
    alpha.push_back(a);
    for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
    const double b = w.norm();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    const auto sz = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd dg = Eigen::Map<Eigen::VectorXd>(alpha.data(), sz);
    Eigen::VectorXd sub = sz > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), sz - 1))
                                 : Eigen::VectorXd(0);
    es.computeFromTridiagonal(dg, sub, Eigen::EigenvaluesOnly);
    const double cur = es.eigenvalues().minCoeff();
    if (b < 1e-12 || std::abs(cur - prev) <= 1e-9 * std::max(1.0, std::abs(cur))) return cur;
    prev = cur;
    beta.push_back(b);
    v = w / b;
  }
  return prev;
}

// Householder basis for span{psi, 1}: B^T A B restricted to the complement.
double dense_tangent_min(const Eigen::MatrixXd& A, const Field& psi) {
  const Eigen::Index n = A.rows();
  if (n <= 2) throw DegenerateGeometry("tangent space is empty");
  Eigen::MatrixXd M(n, 2);
  M.col(0) = psi;
  M.col(1) = Field::Ones(n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  Eigen::MatrixXd B = A;
  B.applyOnTheLeft(qr.householderQ().adjoint());
  B.applyOnTheRight(qr.householderQ());
  Eigen::MatrixXd T = B.bottomRightCorner(n - 2, n - 2);
  T = 0.5 * (T + T.transpose()).eval();
  return dense_min(T);
}

std::function<void(Field&)> tangent_projector(const Field& psi) {
  const Eigen::Index n = psi.size();
  Field u1 = Field::Ones(n).normalized();
  Field u2 = psi - u1.dot(psi) * u1;
  if (u2.norm() < 1e-12 * std::max(1.0, psi.norm())) throw DegenerateGeometry("psi is parallel to constants");
  u2.normalize();
  return [u1, u2](Field& v) {
    v -= u1.dot(v) * u1;
    v -= u2.dot(v) * u2;
  };
}

}  // namespace

double min_eig_full(const SecondVariation& op) {
  const auto n = static_cast<Eigen::Index>(op.grid().size());
  if (static_cast<std::size_t>(n) <= kDenseEigenLimit) return dense_min(op.dense());
  return lanczos_min([&](const Field& z) { return op.apply(z); }, n, {});
}

double min_eig_tangent(const SecondVariation& op, const Field& psi) {
  op.grid().require(psi, "min_eig_tangent");
  const auto n = static_cast<Eigen::Index>(op.grid().size());
  auto project = tangent_projector(psi);  // also rejects degenerate geometry
  if (static_cast<std::size_t>(n) <= kDenseEigenLimit) return dense_tangent_min(op.dense(), psi);
  return lanczos_min([&](const Field& z) { return op.apply(z); }, n, project);
}

double min_eig_penalized(const SecondVariation& op, const Field& psi, double sigma, double tau) {
  op.grid().require(psi, "min_eig_penalized");
  const auto n = static_cast<Eigen::Index>(op.grid().size());
  const double a = op.grid().cell_area();
  const Field one = Field::Ones(n);
  if (static_cast<std::size_t>(n) <= kDenseEigenLimit) {
    Eigen::MatrixXd A = op.dense();
    A.noalias() += (sigma * a) * psi * psi.transpose();
    A.noalias() += (tau * a) * one * one.transpose();
    return dense_min(A);
  }
  return lanczos_min(
      [&](const Field& z) {
        Field r = op.apply(z);
        r += (sigma * a * psi.dot(z)) * psi;
        r += (tau * a * one.dot(z)) * one;
        return r;
      },
      n, {});
}

double nu_bound(const EquilibriumState& state, const PriorModel& prior, const Grid& grid) {
  grid.require(state.q, "nu_bound");
  double m = -kInfinite;
  for (Eigen::Index i = 0; i < state.q.size(); ++i) m = std::max(m, prior.rate_derivs(state.q[i]).second);
  return m + std::abs(state.beta) / grid.lambda_min();
}

ArnoldResult arnold_check(const EquilibriumState& state, const PriorModel& prior, const Grid& grid) {
  grid.require(state.q, "arnold_check");
  ArnoldResult r;
  r.lambda1 = grid.lambda_min();
  r.dqdpsi.resize(state.q.size());
  for (Eigen::Index i = 0; i < state.q.size(); ++i) {
    r.dqdpsi[i] = -state.beta / prior.rate_derivs(state.q[i]).second;
  }
  r.dqdpsi_min = r.dqdpsi.minCoeff();
  r.dqdpsi_max = r.dqdpsi.maxCoeff();
  r.rayleigh_ok = r.dqdpsi_max < 0.0;
  r.arnold2_ok = r.dqdpsi_min > 0.0 && r.dqdpsi_max < r.lambda1;
  return r;
}

Penalization penalization_constants(const Field& psi, double mu_tangent, double nu, const Grid& grid) {
  grid.require(psi, "penalization_constants");
  if (!(mu_tangent > 0.0)) throw Error("penalization_constants: mu_tangent must be positive");
  if (!(nu > 0.0)) throw Error("penalization_constants: nu must be positive");
  const Field one = grid.constant(1.0);
  const double np = l2_norm(grid, psi), n1 = l2_norm(grid, one);
  if (!(np > 0.0)) throw DegenerateGeometry("penalization_constants: psi vanishes");
  const double c = inner_product(grid, psi, one) / (np * n1);
  Penalization p;
  p.theta = 1.0 - std::abs(c);
  if (p.theta < 1e-12) throw DegenerateGeometry("penalization_constants: psi is parallel to constants");
  p.eps_hat = mu_tangent / (2.0 * nu);
  p.K = 0.5 * mu_tangent + nu / p.eps_hat + nu;
  p.sigma = p.K / (p.theta * np * np);
  p.tau = p.K / (p.theta * n1 * n1);
  return p;
}

double verify_penalized_hessian(const EquilibriumState& state, double sigma, double tau, const PriorModel& prior,
                                const Grid& grid) {
  return min_eig_penalized(second_variation(state, prior, grid), state.psi, sigma, tau);
}

StabilityReport analyze_stability(const EquilibriumState& state, const PriorModel& prior, const Grid& grid) {
  StabilityReport r;
  r.E = state.energy;
  r.Gamma = state.circulation;
  r.beta = state.beta;
  r.gamma = state.gamma;
  r.unknowns = grid.size();
  const SecondVariation op = second_variation(state, prior, grid);
  r.mu_full = min_eig_full(op);
  r.nu = nu_bound(state, prior, grid);
  const ArnoldResult a = arnold_check(state, prior, grid);
  r.dqdpsi_min = a.dqdpsi_min;
  r.dqdpsi_max = a.dqdpsi_max;
  r.lambda1 = a.lambda1;
  r.rayleigh_ok = a.rayleigh_ok;
  r.arnold2_ok = a.arnold2_ok;
  const double margin = 1e-6 * r.nu;
  r.canonical_nondegenerate = r.mu_full > margin;
  try {
    r.mu_tangent = min_eig_tangent(op, state.psi);
    r.microcanonical_nondegenerate = r.mu_tangent > margin;
    if (r.microcanonical_nondegenerate) {
      const Penalization p = penalization_constants(state.psi, r.mu_tangent, r.nu, grid);
      r.theta = p.theta;
      r.sigma = p.sigma;
      r.tau = p.tau;
      r.penalized_min = min_eig_penalized(op, state.psi, p.sigma, p.tau);
      r.lyapunov_penalized_ok = r.penalized_min >= 0.5 * r.mu_tangent - 1e-8;
    }
  } catch (const DegenerateGeometry& e) {
    r.mu_tangent = std::nan("");
    r.note = e.what();
  }
  return r;
}

namespace {
json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}
}  // namespace

json stability_to_json(const StabilityReport& r, const Grid& grid) {
  json j;
  j["format"] = kFormatVersion;
  j["grid"] = grid_to_json(grid.spec());
  j["unknowns"] = r.unknowns;
  j["E"] = r.E;
  j["Gamma"] = r.Gamma;
  j["beta"] = r.beta;
  j["gamma"] = r.gamma;
  j["mu_full"] = num(r.mu_full);
  j["mu_tangent"] = num(r.mu_tangent);
  j["nu"] = num(r.nu);
  j["theta"] = num(r.theta);
  j["sigma"] = num(r.sigma);
  j["tau"] = num(r.tau);
  j["penalized_min"] = num(r.penalized_min);
  j["dqdpsi_min"] = r.dqdpsi_min;
  j["dqdpsi_max"] = r.dqdpsi_max;
  j["lambda1"] = r.lambda1;
  j["verdicts"] = {{"rayleigh_ok", r.rayleigh_ok},
                   {"arnold2_ok", r.arnold2_ok},
                   {"canonical_nondegenerate", r.canonical_nondegenerate},
                   {"microcanonical_nondegenerate", r.microcanonical_nondegenerate},
                   {"lyapunov_penalized_ok", r.lyapunov_penalized_ok}};
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

void write_stability_csv(const std::vector<StabilityReport>& reports, const std::filesystem::path& path) {
  CsvWriter csv(path, {"E", "Gamma", "beta", "gamma", "mu_full", "mu_tangent", "nu", "theta", "sigma", "tau",
                       "penalized_min", "dqdpsi_min", "dqdpsi_max", "rayleigh_ok", "arnold2_ok",
                       "canonical_nondegenerate", "microcanonical_nondegenerate", "lyapunov_penalized_ok"});
  auto b = [](bool v) { return static_cast<std::int64_t>(v); };
  for (const auto& r : reports) {
    csv.row({r.E, r.Gamma, r.beta, r.gamma, r.mu_full, r.mu_tangent, r.nu, r.theta, r.sigma, r.tau, r.penalized_min,
             r.dqdpsi_min, r.dqdpsi_max, b(r.rayleigh_ok), b(r.arnold2_ok), b(r.canonical_nondegenerate),
             b(r.microcanonical_nondegenerate), b(r.lyapunov_penalized_ok)});
  }
}

}  // namespace qgeq
