#include "qgeq/channel_domain.hpp"

#include <fftw3.h>

#include <bit>
#include <mutex>
#include <numbers>
#include <sstream>

namespace qgeq {

namespace {

// fftw planning is not thread safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

}  // namespace

DeformationRadius DeformationRadius::finite(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw ConfigError("deformation radius must be finite and positive (use infinite() for r = inf)");
  }
  DeformationRadius d;
  d.infinite_ = false;
  d.r_ = r;
  return d;
}

void validate(const GridSpec& spec) {
  if (!(spec.period_length > 0.0) || !std::isfinite(spec.period_length)) {
    throw ConfigError("grid: period_length must be positive");
  }
  if (!(spec.channel_width > 0.0) || !std::isfinite(spec.channel_width)) {
    throw ConfigError("grid: channel_width must be positive");
  }
  if (!is_power_of_two(spec.n1)) {
    throw ConfigError("grid: n1 must be a power of two (1 selects the zonal fast path)");
  }
  if (!is_power_of_two(spec.n2) || spec.n2 < 2) {
    throw ConfigError("grid: n2 must be a power of two and at least 2");
  }
}

struct Grid::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward_sine = nullptr;
  fftw_plan backward_cosine = nullptr;

  Plans(std::size_t n1, std::size_t n2) {
    const int dims[2] = {static_cast<int>(n2), static_cast<int>(n1)};
    const fftw_r2r_kind fwd[2] = {FFTW_RODFT10, FFTW_R2HC};
    const fftw_r2r_kind bws[2] = {FFTW_RODFT01, FFTW_HC2R};
    const fftw_r2r_kind bwc[2] = {FFTW_REDFT01, FFTW_HC2R};
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;

    std::lock_guard lock(planner_mutex());
    double* buf = fftw_alloc_real(n1 * n2);
    forward = fftw_plan_r2r(2, dims, buf, buf, fwd, flags);
    backward_sine = fftw_plan_r2r(2, dims, buf, buf, bws, flags);
    backward_cosine = fftw_plan_r2r(2, dims, buf, buf, bwc, flags);
    fftw_free(buf);
    if (!forward || !backward_sine || !backward_cosine) {
      throw Error("fftw: failed to create transform plans");
    }
  }

  ~Plans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward_sine);
    fftw_destroy_plan(backward_cosine);
  }

  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  validate(spec_);
  const std::size_t n1 = spec_.n1;
  const std::size_t n2 = spec_.n2;
  cell_area_ = spec_.period_length * spec_.channel_width / static_cast<double>(n1 * n2);
  lambda_min_ = mode_eigenvalue(0, 1);

  green_.resize(n1 * n2);
  parseval_.resize(n1 * n2);
  for (std::size_t i2 = 0; i2 < n2; ++i2) {
    const std::size_t m = i2 + 1;
    const double w2 = (m < n2 ? 1.0 / (2.0 * n2) : 1.0 / (4.0 * n2));
    for (std::size_t slot = 0; slot < n1; ++slot) {
      const std::size_t k = wavenumber_index(slot);
      const bool self_conjugate = (k == 0) || (2 * k == n1);
      const double w1 = (self_conjugate ? 1.0 : 2.0) / static_cast<double>(n1);
      green_[index(slot, i2)] = 1.0 / mode_eigenvalue(k, m);
      parseval_[index(slot, i2)] = w1 * w2;
    }
  }
  plans_ = std::make_shared<const Plans>(n1, n2);
}

double Grid::x1(std::size_t i1) const {
  return -0.5 * spec_.period_length + (static_cast<double>(i1) + 0.5) * spec_.period_length / spec_.n1;
}

double Grid::x2(std::size_t i2) const {
  return -0.5 * spec_.channel_width + (static_cast<double>(i2) + 0.5) * spec_.channel_width / spec_.n2;
}

std::size_t Grid::wavenumber_index(std::size_t slot) const {
  return (2 * slot <= spec_.n1) ? slot : spec_.n1 - slot;
}

double Grid::mode_eigenvalue(std::size_t k, std::size_t m) const {
  const double kx = 2.0 * std::numbers::pi * static_cast<double>(k) / spec_.period_length;
  const double ky = std::numbers::pi * static_cast<double>(m) / spec_.channel_width;
  return kx * kx + ky * ky + spec_.radius.inverse_square();
}

void Grid::forward(std::span<double> data) const {
  fftw_execute_r2r(plans_->forward, data.data(), data.data());
}

void Grid::backward_sine(std::span<double> data) const {
  fftw_execute_r2r(plans_->backward_sine, data.data(), data.data());
  const double scale = 1.0 / (2.0 * static_cast<double>(spec_.n2) * static_cast<double>(spec_.n1));
  for (double& v : data) v *= scale;
}

void Grid::backward_cosine(std::span<double> data) const {
  const std::size_t n1 = spec_.n1;
  const std::size_t n2 = spec_.n2;
  // slot m-1 holds mode m; DCT-III wants mode m in slot m with slot 0 the
  // constant. The m = n2 cosine vanishes at every midpoint and is dropped.
  for (std::size_t i2 = n2 - 1; i2 > 0; --i2) {
    for (std::size_t s = 0; s < n1; ++s) data[index(s, i2)] = data[index(s, i2 - 1)];
  }
  for (std::size_t s = 0; s < n1; ++s) data[index(s, 0)] = 0.0;
  fftw_execute_r2r(plans_->backward_cosine, data.data(), data.data());
  const double scale = 1.0 / (2.0 * static_cast<double>(n2) * static_cast<double>(n1));
  for (double& v : data) v *= scale;
}

Field Grid::sample(const std::function<double(double, double)>& fn) const {
  Field f(static_cast<Eigen::Index>(size()));
  for (std::size_t i2 = 0; i2 < spec_.n2; ++i2) {
    for (std::size_t i1 = 0; i1 < spec_.n1; ++i1) {
      f[static_cast<Eigen::Index>(index(i1, i2))] = fn(x1(i1), x2(i2));
    }
  }
  return f;
}

void Grid::require(const Field& f, const char* what) const {
  if (!matches(f)) {
    std::ostringstream os;
    os << what << ": field of length " << f.size() << " does not match grid of " << size() << " cells";
    throw GridMismatch(os.str());
  }
}

Grid build_grid(const GridSpec& spec) { return Grid(spec); }

void apply_green(const Grid& grid, const Field& z, Field& out) {
  grid.require(z, "apply_green");
  out = z;
  std::span<double> data(out.data(), static_cast<std::size_t>(out.size()));
  grid.forward(data);
  const auto g = grid.green_multipliers();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= g[i];
  grid.backward_sine(data);
}

Field apply_green(const Grid& grid, const Field& z) {
  Field out;
  apply_green(grid, z, out);
  return out;
}

double inner_product(const Grid& grid, const Field& a, const Field& b) {
  grid.require(a, "inner_product");
  grid.require(b, "inner_product");
  return grid.cell_area() * a.dot(b);
}

double l2_norm(const Grid& grid, const Field& a) { return std::sqrt(inner_product(grid, a, a)); }

double integral(const Grid& grid, const Field& a) {
  grid.require(a, "integral");
  return grid.cell_area() * a.sum();
}

double lambda_min(const Grid& grid) { return grid.lambda_min(); }

bool is_zonal(const Grid& grid, const Field& f, double tol) {
  grid.require(f, "is_zonal");
  for (std::size_t i2 = 0; i2 < grid.n2(); ++i2) {
    const double ref = f[static_cast<Eigen::Index>(grid.index(0, i2))];
    for (std::size_t i1 = 1; i1 < grid.n1(); ++i1) {
      if (std::abs(f[static_cast<Eigen::Index>(grid.index(i1, i2))] - ref) > tol) return false;
    }
  }
  return true;
}

}  // namespace qgeq
