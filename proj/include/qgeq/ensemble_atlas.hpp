#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qgeq/equilibrium_solvers.hpp"

namespace qgeq {

/// Uniform axis min, min + step, ..., up to max (inclusive within step/1e6).
struct Axis {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  std::vector<double> values() const;
};

struct SweepSpec {
  Axis energy;
  Axis circulation;
};

struct SurfaceRecord {
  double E = 0.0;
  double Gamma = 0.0;
  bool admissible = false;
  bool converged = false;
  double S = std::nan("");
  double beta = std::nan("");
  double gamma = std::nan("");
  int iterations = 0;
  SolveStatus status = SolveStatus::infeasible;
  /// Cold and warm starts both converged but disagree in S by more than the
  /// support tolerance (possible nonuniqueness).
  bool multistart_gap = false;
  double multistart_delta = 0.0;
  std::shared_ptr<const EquilibriumState> state;  ///< kept only on request
};

/// S(E, Gamma) on a rectangular grid; records are E-major (row = fixed E).
class EntropySurface {
 public:
  EntropySurface() = default;
  EntropySurface(std::vector<double> E, std::vector<double> Gamma);

  const std::vector<double>& energies() const { return E_; }
  const std::vector<double>& circulations() const { return G_; }
  std::size_t rows() const { return E_.size(); }
  std::size_t cols() const { return G_.size(); }
  std::size_t size() const { return records_.size(); }
  std::size_t index(std::size_t iE, std::size_t iG) const { return iE * G_.size() + iG; }

  SurfaceRecord& at(std::size_t iE, std::size_t iG) { return records_[index(iE, iG)]; }
  const SurfaceRecord& at(std::size_t iE, std::size_t iG) const { return records_[index(iE, iG)]; }
  SurfaceRecord& operator[](std::size_t k) { return records_[k]; }
  const SurfaceRecord& operator[](std::size_t k) const { return records_[k]; }

  /// Grid index of (E, Gamma) when it lies within a quarter spacing of a node.
  std::optional<std::size_t> find(double E, double Gamma) const;
  /// True if the record has usable S and multipliers.
  bool usable(std::size_t k) const { return records_[k].admissible && records_[k].converged; }

 private:
  std::vector<double> E_, G_;
  std::vector<SurfaceRecord> records_;
};

struct SweepOptions {
  SolverOptions solver;
  Backend backend = Backend::serial;
  int jobs = 0;
  bool multistart = true;   ///< solve cold as well as warm and keep the better
  bool keep_states = false;
  double gap_tol = 1e-6;    ///< relative S disagreement reported as a multistart gap
};

/// Each row (fixed E) is an independent warm-start chain: it starts cold at
/// the middle circulation and continues outward in both directions, so
/// results do not depend on the backend or thread count.
EntropySurface sweep_entropy(const Grid& grid, const PriorModel& prior, const Topography& topo,
                             const SweepSpec& spec, const SweepOptions& opts = {});

struct SupportTolerances {
  double support = 1e-6;  ///< scaled by (1 + |S|)
  double contact = 1e-4;  ///< scaled by (1 + |S|)
};

struct SupportResult {
  bool supported = false;
  std::optional<std::size_t> witness;  ///< first violating record
  double violation = 0.0;              ///< largest S' - plane(E', Gamma')
  std::vector<std::size_t> contacts;   ///< records within the contact tolerance
};

/// Supporting-plane test at record k over every usable record. Requires k usable.
SupportResult support_test(const EntropySurface& surface, std::size_t k, const SupportTolerances& tol = {});

enum class EquivalenceKind { full, partial, nonequivalent, inadmissible, unresolved };

std::string to_string(EquivalenceKind kind);
EquivalenceKind parse_equivalence(const std::string& s);

struct EquivalenceLabel {
  EquivalenceKind kind = EquivalenceKind::inadmissible;
  std::optional<std::size_t> witness;  ///< nonequivalent: violating record
  std::vector<std::size_t> extra_contacts;  ///< partial: contacts besides the point itself
};

/// `unresolved` marks admissible points whose solve did not converge.
EquivalenceLabel classify(const EntropySurface& surface, std::size_t k, const SupportTolerances& tol = {});
std::vector<EquivalenceLabel> classify_all(const EntropySurface& surface, const SupportTolerances& tol = {},
                                           Backend backend = Backend::serial, int jobs = 0);

/// Phi(beta, gamma) = min over usable records of beta E + gamma Gamma - S.
double conjugate_phi(const EntropySurface& surface, double beta, double gamma);

/// S** at every record (NaN where not usable), from the records' own
/// multipliers plus the corners of their bounding box.
std::vector<double> concave_hull(const EntropySurface& surface, Backend backend = Backend::serial, int jobs = 0);

struct CrossCheckReport {
  EquivalenceKind label = EquivalenceKind::inadmissible;
  SolveStatus canonical_status = SolveStatus::not_converged;
  double E_canonical = std::nan("");
  double Gamma_canonical = std::nan("");
  double energy_rel_error = std::nan("");
  double circulation_rel_error = std::nan("");
  double state_rel_error = std::nan("");
  /// full: canonical state reproduces (E, Gamma) and q; nonequivalent: it does not.
  bool consistent = false;
  std::string note;
};

/// Canonical solve at the record's multipliers, started from the constant field.
CrossCheckReport cross_check_canonical(const EntropySurface& surface, std::size_t k, EquivalenceKind label,
                                       const Grid& grid, const PriorModel& prior, const Topography& topo,
                                       const SolverOptions& opts = {});

struct GradientCheck {
  std::size_t checked = 0;
  std::size_t passed_beta = 0;
  std::size_t passed_gamma = 0;
  double fraction_beta() const { return checked ? double(passed_beta) / double(checked) : 0.0; }
  double fraction_gamma() const { return checked ? double(passed_gamma) / double(checked) : 0.0; }
};

/// Compares multipliers with centered differences of S at interior points whose
/// four neighbours are usable: |beta - dS/dE| <= max(rel |beta|, abs_floor).
GradientCheck multiplier_gradient_check(const EntropySurface& surface, double rel = 0.05, double abs_floor = 0.02);

/// CSV columns E,Gamma,admissible,converged,S,beta,gamma,label,witness_E,witness_Gamma.
void write_surface_csv(const EntropySurface& surface, const std::vector<EquivalenceLabel>& labels,
                       const std::filesystem::path& path);

/// Reads a surface CSV back (labels returned separately). Throws Error on a
/// header mismatch or a non-rectangular grid.
EntropySurface read_surface_csv(const std::filesystem::path& path, std::vector<EquivalenceLabel>* labels = nullptr);

}  // namespace qgeq
