#include "qgeq/prior_models.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace qgeq {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::gaussian:
      return "gaussian";
    case PriorKind::gamma_skew:
      return "gamma_skew";
    case PriorKind::tabulated:
      return "tabulated";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tabulated density: piecewise linear on the sample nodes. Moments of the
// tilted density exp(eta y) p(y) are integrated segment by segment with
// Gauss-Legendre; the integrand is smooth on each segment.

struct PriorModel::Table {
  std::vector<double> y;
  std::vector<double> p;

  struct Moments {
    double log_mass;  // log of integral exp(eta y) p
    double mean;
    double variance;
  };

  double density(double v) const {
    if (v <= y.front() || v >= y.back()) return 0.0;
    const auto it = std::upper_bound(y.begin(), y.end(), v);
    const std::size_t j = static_cast<std::size_t>(it - y.begin());
    const double t = (v - y[j - 1]) / (y[j] - y[j - 1]);
    return (1.0 - t) * p[j - 1] + t * p[j];
  }

  Moments moments(double eta) const {
    using Quad = boost::math::quadrature::gauss<double, 10>;
    // shift the exponent so that exp(eta y - shift) <= 1 on the support
    const double shift = eta >= 0.0 ? eta * y.back() : eta * y.front();
    double m0 = 0.0, m1 = 0.0, m2 = 0.0;
    for (std::size_t j = 0; j + 1 < y.size(); ++j) {
      const double a = y[j], b = y[j + 1];
      const double pa = p[j], pb = p[j + 1];
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      const auto& nodes = Quad::abscissa();
      const auto& weights = Quad::weights();
      auto accumulate = [&](double x, double w) {
        const double v = mid + half * x;
        const double t = (v - a) / (b - a);
        const double dens = (1.0 - t) * pa + t * pb;
        const double e = std::exp(eta * v - shift) * dens * w * half;
        m0 += e;
        m1 += e * v;
        m2 += e * v * v;
      };
      // boost stores non-negative abscissae only; mirror them
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        accumulate(nodes[k], weights[k]);
        if (nodes[k] != 0.0) accumulate(-nodes[k], weights[k]);
      }
    }
    Moments out{};
    out.log_mass = shift + std::log(m0);
    out.mean = m1 / m0;
    out.variance = std::max(m2 / m0 - out.mean * out.mean, 0.0);
    return out;
  }

  /// Solves f'(eta) = v for v strictly inside (y_min, y_max).
  double invert_mean(double v) const {
    double lo = -1.0, hi = 1.0;
    while (moments(lo).mean > v) lo *= 2.0;
    while (moments(hi).mean < v) hi *= 2.0;
    double eta = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const Moments m = moments(eta);
      const double r = m.mean - v;
      if (r > 0.0) hi = eta; else lo = eta;
      if (std::abs(r) <= 1e-15 * (1.0 + std::abs(v))) break;
      double next = eta - r / m.variance;
      if (!(next > lo && next < hi) || m.variance <= 0.0) next = 0.5 * (lo + hi);
      eta = next;
      if (hi - lo <= 1e-15 * (1.0 + std::abs(eta))) break;
    }
    return eta;
  }
};

// ---------------------------------------------------------------------------

PriorModel PriorModel::gaussian() {
  PriorModel m;
  m.kind_ = PriorKind::gaussian;
  m.decay_delta_ = 0.5;
  return m;
}

PriorModel PriorModel::gamma_skew(double skew) {
  if (!(skew >= 0.0) || !std::isfinite(skew)) throw ConfigError("gamma_skew: skew must be finite and >= 0");
  if (skew == 0.0) {
    PriorModel m = gaussian();
    m.kind_ = PriorKind::gamma_skew;
    return m;
  }
  PriorModel m;
  m.kind_ = PriorKind::gamma_skew;
  m.skew_ = skew;
  m.eta_domain_ = Interval{-kInfinite, 1.0 / skew};
  m.y_domain_ = Interval{-1.0 / skew, kInfinite};
  return m;
}

PriorModel PriorModel::tabulated(std::vector<double> y, std::vector<double> density) {
  if (y.size() < 2 || y.size() != density.size()) {
    throw ConfigError("tabulated prior: need at least two (y, density) rows of equal length");
  }
  double mass = 0.0, first = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (!std::isfinite(y[j]) || !std::isfinite(density[j]) || density[j] < 0.0) {
      throw ConfigError("tabulated prior: non-finite or negative entry at row " + std::to_string(j));
    }
    if (j > 0) {
      if (!(y[j] > y[j - 1])) throw ConfigError("tabulated prior: y must be strictly increasing");
      const double h = y[j] - y[j - 1];
      mass += 0.5 * h * (density[j] + density[j - 1]);
      // exact first moment of the linear interpolant on the segment
      first += h * (density[j - 1] * (2.0 * y[j - 1] + y[j]) + density[j] * (y[j - 1] + 2.0 * y[j])) / 6.0;
    }
  }
  if (std::abs(mass - 1.0) > 1e-6) {
    std::ostringstream os;
    os << "tabulated prior: density integrates to " << mass << ", expected 1 within 1e-6";
    throw ConfigError(os.str());
  }
  auto table = std::make_shared<Table>();
  table->y = std::move(y);
  table->p = std::move(density);

  PriorModel m;
  m.kind_ = PriorKind::tabulated;
  m.mean_ = first;
  m.y_domain_ = Interval{table->y.front(), table->y.back()};
  m.decay_delta_ = 1.0;  // compact support
  m.table_ = std::move(table);
  return m;
}

PriorModel PriorModel::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("tabulated prior: cannot open " + path.string());
  std::vector<double> y, p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double a = 0.0, b = 0.0;
    if (!(ls >> a >> b)) {
      if (y.empty() && lineno == 1) continue;  // header
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected two numeric columns");
    }
    y.push_back(a);
    p.push_back(b);
  }
  return tabulated(std::move(y), std::move(p));
}

const std::vector<double>& PriorModel::table_y() const {
  static const std::vector<double> empty;
  return table_ ? table_->y : empty;
}

const std::vector<double>& PriorModel::table_density() const {
  static const std::vector<double> empty;
  return table_ ? table_->p : empty;
}

// ---------------------------------------------------------------------------

double PriorModel::cgf_unchecked(double eta) const {
  switch (kind_) {
    case PriorKind::tabulated:
      return table_->moments(eta).log_mass;
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) return -eta / skew_ - std::log1p(-skew_ * eta) / (skew_ * skew_);
      [[fallthrough]];
    case PriorKind::gaussian:
      return 0.5 * eta * eta;
  }
  return 0.0;
}

double PriorModel::mean_map(double eta) const {
  switch (kind_) {
    case PriorKind::tabulated:
      return table_->moments(eta).mean;
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) return eta / (1.0 - skew_ * eta);
      [[fallthrough]];
    case PriorKind::gaussian:
      return eta;
  }
  return 0.0;
}

double PriorModel::variance_map(double eta) const {
  switch (kind_) {
    case PriorKind::tabulated:
      return table_->moments(eta).variance;
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) {
        const double d = 1.0 - skew_ * eta;
        return 1.0 / (d * d);
      }
      [[fallthrough]];
    case PriorKind::gaussian:
      return 1.0;
  }
  return 1.0;
}

double PriorModel::rate_unchecked(double y) const {
  switch (kind_) {
    case PriorKind::tabulated: {
      const double eta = table_->invert_mean(y);
      return std::max(eta * y - table_->moments(eta).log_mass, 0.0);
    }
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) return y / skew_ - std::log1p(skew_ * y) / (skew_ * skew_);
      [[fallthrough]];
    case PriorKind::gaussian:
      return 0.5 * y * y;
  }
  return 0.0;
}

double PriorModel::rate_curvature(double y) const {
  switch (kind_) {
    case PriorKind::tabulated:
      return 1.0 / table_->moments(table_->invert_mean(y)).variance;
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) {
        const double d = 1.0 + skew_ * y;
        return 1.0 / (d * d);
      }
      [[fallthrough]];
    case PriorKind::gaussian:
      return 1.0;
  }
  return 1.0;
}

namespace {

[[noreturn]] void throw_outside(const char* fn, double arg, Interval dom) {
  const double boundary = arg >= dom.hi ? dom.hi : dom.lo;
  std::ostringstream os;
  os << fn << ": argument " << arg << " outside the open domain (" << dom.lo << ", " << dom.hi
     << "); boundary at " << boundary;
  throw DomainError(os.str(), boundary);
}

}  // namespace

double PriorModel::cgf(double eta) const {
  if (!eta_domain_.contains(eta)) throw_outside("cgf", eta, eta_domain_);
  return cgf_unchecked(eta);
}

Derivs PriorModel::cgf_derivs(double eta) const {
  if (!eta_domain_.contains(eta)) throw_outside("cgf_derivs", eta, eta_domain_);
  if (kind_ == PriorKind::tabulated) {
    const auto m = table_->moments(eta);
    return {m.mean, m.variance};
  }
  return {mean_map(eta), variance_map(eta)};
}

double PriorModel::rate(double y) const {
  if (!y_domain_.contains(y)) return kInfinite;
  return rate_unchecked(y);
}

Derivs PriorModel::rate_derivs(double y) const {
  if (!y_domain_.contains(y)) throw_outside("rate_derivs", y, y_domain_);
  switch (kind_) {
    case PriorKind::tabulated: {
      const double eta = table_->invert_mean(y);
      return {eta, 1.0 / table_->moments(eta).variance};
    }
    case PriorKind::gamma_skew:
      if (skew_ > 0.0) {
        const double d = 1.0 + skew_ * y;
        return {y / d, 1.0 / (d * d)};
      }
      [[fallthrough]];
    case PriorKind::gaussian:
      return {y, 1.0};
  }
  return {};
}

// ---------------------------------------------------------------------------

double legendre_conjugate_oracle(const std::function<double(double)>& f, Interval eta_domain, double y) {
  auto phi = [&](double eta) { return eta * y - f(eta); };

  // Walk from an interior start in the ascent direction, doubling the step
  // (or halving the distance to a finite boundary) until phi decreases.
  double start = 0.0;
  if (!eta_domain.contains(start)) {
    start = std::isfinite(eta_domain.lo) && std::isfinite(eta_domain.hi)
                ? 0.5 * (eta_domain.lo + eta_domain.hi)
                : (std::isfinite(eta_domain.lo) ? eta_domain.lo + 1.0 : eta_domain.hi - 1.0);
  }
  const double probe = 1e-3;
  auto step_toward = [&](double from, double dir, double h) {
    const double bound = dir > 0 ? eta_domain.hi : eta_domain.lo;
    double to = from + dir * h;
    if (std::isfinite(bound) && (dir > 0 ? to >= bound : to <= bound)) to = from + 0.5 * (bound - from);
    return to;
  };

  const double dir = phi(step_toward(start, 1.0, probe)) > phi(start) ? 1.0 : -1.0;
  double a = step_toward(start, -dir, probe);
  double m = start;
  double fm = phi(m);
  double h = 1.0;
  double b = step_toward(m, dir, h);
  double fb = phi(b);
  constexpr double kUnbounded = 1e12;
  while (fb >= fm) {
    a = m;
    m = b;
    fm = fb;
    h *= 2.0;
    b = step_toward(m, dir, h);
    fb = phi(b);
    const double bound = dir > 0 ? eta_domain.hi : eta_domain.lo;
    if (std::abs(m) > kUnbounded || !std::isfinite(fb) ||
        (std::isfinite(bound) && std::abs(bound - m) < 1e-300)) {
      return kInfinite;
    }
  }
  double lo = std::min(a, b), hi = std::max(a, b);
  const auto res = boost::math::tools::brent_find_minima(
      [&](double eta) { return -phi(eta); }, lo, hi, std::numeric_limits<double>::digits);
  return -res.second;
}

double information(const PriorModel& prior, const Grid& grid, const Field& q) {
  grid.require(q, "information");
  const Interval dom = prior.y_domain();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!dom.contains(q[i])) return kInfinite;
    sum += prior.rate_unchecked(q[i]);
  }
  return grid.cell_area() * sum;
}

}  // namespace qgeq
