#include "qgeq/kernels.hpp"

#include <array>
#include <vector>

namespace qgeq {

std::string to_string(Backend b) { return b == Backend::serial ? "serial" : "openmp"; }

Backend parse_backend(const std::string& s) {
  if (s == "serial") return Backend::serial;
  if (s == "openmp") return Backend::openmp;
  throw ConfigError("unknown backend '" + s + "' (expected serial or openmp)");
}

bool openmp_enabled() {
#ifdef QGEQ_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

namespace {

std::size_t block_count(std::size_t n) { return (n + kReductionBlock - 1) / kReductionBlock; }

// Evaluates `block(b, partial)` for every block, then sums partials in order.
template <std::size_t K, class Block>
std::array<double, K> blocked_sum(Backend backend, std::size_t n, Block&& block) {
  const std::size_t nb = block_count(n);
  std::vector<std::array<double, K>> partial(nb);
  parallel_for(backend, nb, 0, [&](std::size_t b) {
    partial[b].fill(0.0);
    block(b * kReductionBlock, std::min(n, (b + 1) * kReductionBlock), partial[b]);
  });
  std::array<double, K> total{};
  for (const auto& p : partial) {
    for (std::size_t k = 0; k < K; ++k) total[k] += p[k];
  }
  return total;
}

}  // namespace

TiltedMoments tilted_moments(Backend backend, const PriorModel& prior, const Grid& grid, const Field& psi,
                             double beta, double gamma) {
  grid.require(psi, "tilted_moments");
  const Interval dom = prior.eta_domain();
  const std::size_t n = grid.size();
  // slot 6 counts cells outside the domain
  const auto s = blocked_sum<7>(backend, n, [&](std::size_t lo, std::size_t hi, std::array<double, 7>& acc) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double p = psi[static_cast<Eigen::Index>(i)];
      const double eta = -beta * p - gamma;
      if (!dom.contains(eta)) {
        acc[6] += 1.0;
        continue;
      }
      const double f1 = prior.mean_map(eta);
      const double f2 = prior.variance_map(eta);
      acc[0] += prior.cgf_unchecked(eta);
      acc[1] += p * f1;
      acc[2] += f1;
      acc[3] += p * p * f2;
      acc[4] += p * f2;
      acc[5] += f2;
    }
  });
  const double a = grid.cell_area();
  TiltedMoments m;
  m.in_domain = s[6] == 0.0;
  m.f = a * s[0];
  m.q_psi = a * s[1];
  m.q_one = a * s[2];
  m.w_pp = a * s[3];
  m.w_p1 = a * s[4];
  m.w_11 = a * s[5];
  return m;
}

bool mean_field_map(Backend backend, const PriorModel& prior, const Field& psi, double beta, double gamma,
                    Field& out) {
  const Interval dom = prior.eta_domain();
  const std::size_t n = static_cast<std::size_t>(psi.size());
  out.resize(psi.size());
  const auto bad = blocked_sum<1>(backend, n, [&](std::size_t lo, std::size_t hi, std::array<double, 1>& acc) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double eta = -beta * psi[k] - gamma;
      if (!dom.contains(eta)) {
        acc[0] += 1.0;
        out[k] = 0.0;
      } else {
        out[k] = prior.mean_map(eta);
      }
    }
  });
  return bad[0] == 0.0;
}

double information_sum(Backend backend, const PriorModel& prior, const Grid& grid, const Field& q) {
  grid.require(q, "information");
  const Interval dom = prior.y_domain();
  const std::size_t n = grid.size();
  const auto s = blocked_sum<2>(backend, n, [&](std::size_t lo, std::size_t hi, std::array<double, 2>& acc) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double y = q[static_cast<Eigen::Index>(i)];
      if (!dom.contains(y)) {
        acc[1] += 1.0;
        continue;
      }
      acc[0] += prior.rate_unchecked(y);
    }
  });
  if (s[1] != 0.0) return kInfinite;
  return grid.cell_area() * s[0];
}

}  // namespace qgeq
