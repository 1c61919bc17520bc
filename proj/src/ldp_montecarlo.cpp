#include "qgeq/ldp_montecarlo.hpp"

#include <algorithm>
#include <cmath>

namespace qgeq {

std::string to_string(BlockSampling s) { return s == BlockSampling::direct ? "direct" : "exact"; }

BlockSampling parse_block_sampling(const std::string& s) {
  if (s == "direct") return BlockSampling::direct;
  if (s == "exact") return BlockSampling::exact;
  throw ConfigError("unknown block sampling '" + s + "' (expected direct or exact)");
}

void MCConfig::validate() const {
  if (n_schedule.empty()) throw ConfigError("mc: n_schedule is empty");
  if (macrocells == 0) throw ConfigError("mc: macrocells must be positive");
  for (std::size_t n : n_schedule) {
    if (n == 0 || n % macrocells != 0) {
      throw ConfigError("mc: n = " + std::to_string(n) + " is not a positive multiple of macrocells");
    }
  }
  if (trials < 1000) throw ConfigError("mc: trials must be at least 1000");
  if (!(delta > 0.0)) throw ConfigError("mc: delta must be positive");
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t entry, std::uint64_t batch) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ entry) ^ batch);
}

namespace {

// Sampler for the prior tilted by exp(eta y) (eta = 0: the prior itself).
class TiltedSampler {
 public:
  TiltedSampler(const PriorModel& prior, double eta) : eps_(prior.skew()), eta_(eta) {
    if (prior.kind() == PriorKind::tabulated) {
      throw ConfigError("mc: no sampler for tabulated priors");
    }
    if (!prior.eta_domain().contains(eta)) throw DomainError("mc: tilt outside eta domain", 0.0);
    if (eps_ > 0.0) {
      shape_ = 1.0 / (eps_ * eps_);
      scale_ = eps_ * eps_ / (1.0 - eps_ * eta_);
    }
  }

  double draw(std::mt19937_64& rng) const {
    if (eps_ > 0.0) {
      std::gamma_distribution<double> g(shape_, scale_);
      return (g(rng) - 1.0) / eps_;
    }
    std::normal_distribution<double> nd(eta_, 1.0);
    return nd(rng);
  }

  // Sum of m independent draws from its closed-form law.
  double draw_sum(std::size_t m, std::mt19937_64& rng) const {
    const auto mm = static_cast<double>(m);
    if (eps_ > 0.0) {
      std::gamma_distribution<double> g(mm * shape_, scale_);
      return (g(rng) - mm) / eps_;
    }
    std::normal_distribution<double> nd(mm * eta_, std::sqrt(mm));
    return nd(rng);
  }

 private:
  double eps_;
  double eta_;
  double shape_ = 0.0;
  double scale_ = 0.0;
};

void block_sums(const TiltedSampler& s, std::size_t n, std::size_t blocks, BlockSampling mode,
                std::mt19937_64& rng, std::vector<double>& out) {
  const std::size_t m = n / blocks;
  out.assign(blocks, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    if (mode == BlockSampling::exact) {
      out[b] = s.draw_sum(m, rng);
    } else {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += s.draw(rng);
      out[b] = acc;
    }
  }
}

struct BatchSums {
  std::size_t hits = 0;
  double w = 0.0;
  double w2 = 0.0;
};

}  // namespace

std::vector<double> sample_coarse(const PriorModel& prior, std::size_t n, std::size_t macrocells,
                                  std::mt19937_64& rng) {
  if (macrocells == 0 || n == 0 || n % macrocells != 0) {
    throw ConfigError("sample_coarse: n must be a positive multiple of the number of macrocells");
  }
  const TiltedSampler s(prior, 0.0);
  std::vector<double> out;
  block_sums(s, n, macrocells, BlockSampling::direct, rng, out);
  const double m = static_cast<double>(n / macrocells);
  for (double& v : out) v /= m;
  return out;
}

MCResult estimate_rate(const MCConfig& config, const PriorModel& prior, double c) {
  config.validate();
  if (is_infinite(prior.rate(c))) throw ConfigError("mc: i(c) is infinite at the target");
  MCResult res;
  res.c = c;
  res.target = prior.rate(c);
  const double lo = c - config.delta, hi = c + config.delta;
  // least-rate point of the closed ball (i is convex with its minimum at the mean)
  const double ystar = std::clamp(prior.mean(), lo, hi);
  res.band_low = prior.rate(ystar);
  res.band_high = std::max(prior.rate(lo), prior.rate(hi));

  const double eta = config.importance ? prior.rate_derivs(ystar).first : 0.0;
  const double offset_rate = config.importance ? prior.rate(ystar) : 0.0;
  const TiltedSampler sampler(prior, eta);
  const std::size_t batches = (config.trials + kTrialBatch - 1) / kTrialBatch;

  for (std::size_t e = 0; e < config.n_schedule.size(); ++e) {
    const std::size_t n = config.n_schedule[e];
    const std::size_t m = n / config.macrocells;
    const double md = static_cast<double>(m);
    std::vector<BatchSums> partial(batches);
    parallel_for(config.backend, batches, config.jobs, [&](std::size_t b) {
      std::mt19937_64 rng(stream_seed(config.seed, e, b));
      const std::size_t count = std::min(kTrialBatch, config.trials - b * kTrialBatch);
      std::vector<double> sums;
      BatchSums acc;
      for (std::size_t t = 0; t < count; ++t) {
        block_sums(sampler, n, config.macrocells, config.sampling, rng, sums);
        bool inside = true;
        double shift = 0.0;
        for (double s : sums) {
          const double mean = s / md;
          if (!(mean > lo && mean < hi)) inside = false;
          shift += s - md * ystar;
        }
        if (!inside) continue;
        const double w = config.importance ? std::exp(-eta * shift) : 1.0;
        ++acc.hits;
        acc.w += w;
        acc.w2 += w * w;
      }
      partial[b] = acc;
    });
    BatchSums tot;
    for (const auto& p : partial) {
      tot.hits += p.hits;
      tot.w += p.w;
      tot.w2 += p.w2;
    }
    MCRow row;
    row.n = n;
    row.trials = config.trials;
    row.hits = tot.hits;
    const double T = static_cast<double>(config.trials);
    const double nd = static_cast<double>(n);
    const double mean = tot.w / T;
    const double se = std::sqrt(std::max(tot.w2 / T - mean * mean, 0.0) / T);
    row.probability = std::exp(-nd * offset_rate) * mean;
    if (row.hits < 5) {
      row.censored = true;
      row.rate_lower_bound = offset_rate - std::log((static_cast<double>(row.hits) + 3.0) / T) / nd;
    } else {
      row.rate = offset_rate - std::log(mean) / nd;
      row.rate_se = se / (mean * nd);
      row.ci_low = offset_rate - std::log(mean + 2.0 * se) / nd;
      row.ci_high = mean - 2.0 * se > 0.0 ? offset_rate - std::log(mean - 2.0 * se) / nd : kInfinite;
    }
    res.rows.push_back(row);
  }

  res.monotone_trend = true;
  for (std::size_t k = 2; k + 1 < res.rows.size(); ++k) {
    const MCRow& a = res.rows[k];
    const MCRow& b = res.rows[k + 1];
    if (a.censored || b.censored) {
      res.monotone_trend = false;
      continue;
    }
    if (b.rate > a.rate + 2.0 * std::hypot(a.rate_se, b.rate_se)) res.monotone_trend = false;
  }
  return res;
}

void write_mc_csv(const MCResult& result, const std::filesystem::path& path) {
  CsvWriter csv(path, {"n", "hits", "trials", "rate", "ci_low", "ci_high", "target"});
  for (const auto& r : result.rows) {
    csv.row({static_cast<std::int64_t>(r.n), static_cast<std::int64_t>(r.hits), static_cast<std::int64_t>(r.trials),
             r.rate, r.ci_low, r.ci_high, result.target});
  }
}

json mc_to_json(const MCResult& result, const MCConfig& config) {
  json j;
  j["format"] = kFormatVersion;
  j["c"] = result.c;
  j["delta"] = config.delta;
  j["macrocells"] = config.macrocells;
  j["trials"] = config.trials;
  j["seed"] = config.seed;
  j["importance"] = config.importance;
  j["sampling"] = to_string(config.sampling);
  j["target"] = result.target;
  j["band"] = {result.band_low, result.band_high};
  j["monotone_trend"] = result.monotone_trend;
  json rows = json::array();
  for (const auto& r : result.rows) {
    json row;
    row["n"] = r.n;
    row["hits"] = r.hits;
    row["probability"] = r.probability;
    row["censored"] = r.censored;
    if (r.censored) {
      row["rate_lower_bound"] = r.rate_lower_bound;
    } else {
      row["rate"] = r.rate;
      row["rate_se"] = r.rate_se;
    }
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j;
}

}  // namespace qgeq
