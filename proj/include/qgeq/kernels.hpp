#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <string>

#include "qgeq/channel_domain.hpp"
#include "qgeq/prior_models.hpp"

#ifdef QGEQ_HAVE_OPENMP
#include <omp.h>
#endif

namespace qgeq {

/// Execution backend for the data-parallel kernels. `serial` is the
/// reference; `openmp` must produce bit-identical results.
enum class Backend { serial, openmp };

std::string to_string(Backend b);
/// Accepts "serial" or "openmp"; throws ConfigError otherwise.
Backend parse_backend(const std::string& s);
/// False when the library was built without OpenMP (openmp then runs serially).
bool openmp_enabled();

/// Reductions are summed in fixed-size blocks whose partials are added in
/// block order, so the result does not depend on the thread count.
inline constexpr std::size_t kReductionBlock = 512;

/// Cell-area-weighted moments of the tilted prior at eta = -beta psi - gamma:
///   f      = int f(eta)
///   q_psi  = int psi f'(eta),  q_one = int f'(eta)
///   w_pp   = int psi^2 f''(eta), w_p1 = int psi f''(eta), w_11 = int f''(eta)
/// `in_domain` is false (and the sums meaningless) when some eta leaves the
/// prior's eta domain.
struct TiltedMoments {
  bool in_domain = true;
  double f = 0.0;
  double q_psi = 0.0;
  double q_one = 0.0;
  double w_pp = 0.0;
  double w_p1 = 0.0;
  double w_11 = 0.0;
};

TiltedMoments tilted_moments(Backend backend, const PriorModel& prior, const Grid& grid, const Field& psi,
                             double beta, double gamma);

/// out = f'(-beta psi - gamma). Returns false if some cell leaves the eta domain
/// (out is then unspecified).
bool mean_field_map(Backend backend, const PriorModel& prior, const Field& psi, double beta, double gamma,
                    Field& out);

/// int i(q); kInfinite when some value leaves the y domain.
double information_sum(Backend backend, const PriorModel& prior, const Grid& grid, const Field& q);

/// Runs fn(i) for i in [0, n). With `openmp`, iterations are distributed over
/// at most `jobs` threads (jobs <= 0: runtime default). The first exception
/// thrown by any iteration is rethrown after the loop.
template <class Fn>
void parallel_for(Backend backend, std::size_t n, int jobs, Fn&& fn) {
#ifdef QGEQ_HAVE_OPENMP
  if (backend == Backend::openmp && n > 1) {
    std::exception_ptr err;
    std::mutex m;
    const int threads = jobs > 0 ? jobs : omp_get_max_threads();
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < count; ++i) {
      try {
        fn(static_cast<std::size_t>(i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    return;
  }
#else
  (void)jobs;
#endif
  (void)backend;
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace qgeq
