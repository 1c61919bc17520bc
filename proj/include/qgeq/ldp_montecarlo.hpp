#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "qgeq/io.hpp"
#include "qgeq/kernels.hpp"
#include "qgeq/prior_models.hpp"

namespace qgeq {

/// How block means are drawn: `direct` sums n/ntilde prior samples per block;
/// `exact` draws each block sum from its closed-form law (gaussian and gamma
/// priors are closed under convolution).
enum class BlockSampling { direct, exact };

std::string to_string(BlockSampling s);
BlockSampling parse_block_sampling(const std::string& s);

struct MCConfig {
  std::vector<std::size_t> n_schedule = {64, 256, 1024, 4096, 16384};
  std::size_t macrocells = 1;
  double delta = 0.05;
  std::size_t trials = 100000;
  std::uint64_t seed = 20240601;
  /// Sample from the prior tilted to the least-rate point of the ball and
  /// reweight. Without it, hits become unobservable once n i(c) exceeds log(trials).
  bool importance = true;
  BlockSampling sampling = BlockSampling::exact;
  Backend backend = Backend::serial;
  int jobs = 0;

  /// Throws ConfigError: each n divisible by macrocells, trials >= 1000, delta > 0.
  void validate() const;
};

/// Trials are split into batches of this size; batch b of schedule entry s
/// draws from mt19937_64 seeded with splitmix64(seed, s, b).
inline constexpr std::size_t kTrialBatch = 1000;

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t entry, std::uint64_t batch);

/// Block means of n prior samples in `macrocells` blocks. Throws ConfigError
/// for tabulated priors (no sampler) or when n is not divisible.
std::vector<double> sample_coarse(const PriorModel& prior, std::size_t n, std::size_t macrocells,
                                  std::mt19937_64& rng);

struct MCRow {
  std::size_t n = 0;
  std::size_t hits = 0;
  std::size_t trials = 0;
  double probability = 0.0;  ///< estimate of P{max |block mean - c| < delta}
  double rate = std::nan("");
  double rate_se = std::nan("");
  double ci_low = std::nan("");   ///< two-sigma interval for the rate
  double ci_high = std::nan("");
  bool censored = false;          ///< fewer than 5 hits: rate not reported
  double rate_lower_bound = std::nan("");
};

struct MCResult {
  double c = 0.0;
  double target = 0.0;    ///< i(c) |X| with |X| = 1
  double band_low = 0.0;  ///< min of i over the delta-ball
  double band_high = 0.0; ///< max of i over the delta-ball
  std::vector<MCRow> rows;
  /// Rates nonincreasing beyond the first two entries within two sigma.
  bool monotone_trend = false;
};

MCResult estimate_rate(const MCConfig& config, const PriorModel& prior, double c);

/// Columns n,hits,trials,rate,ci_low,ci_high,target.
void write_mc_csv(const MCResult& result, const std::filesystem::path& path);
json mc_to_json(const MCResult& result, const MCConfig& config);

}  // namespace qgeq
