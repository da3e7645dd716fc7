#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memtest/constructions.hpp"
#include "memtest/distribution.hpp"
#include "memtest/io.hpp"
#include "memtest/machine.hpp"
#include "memtest/rng.hpp"

namespace memtest {

struct SimConfig {
  std::size_t trials = 1000;
  /// Horizon per trial in steps. Stored as a double because chain testers
  /// have mean absorption times far beyond 2^64.
  double max_steps = 1e7;
  std::uint64_t seed = 1;
  /// Worker threads; 0 means hardware concurrency, capped by MEMTEST_THREADS.
  std::size_t threads = 0;
};

struct Snapshot {
  double t;
  double cesaro_error;  // mean over trials of the wrong-decision fraction of steps 1..t
};

struct SimReport {
  std::string engine;
  std::size_t trials = 0;
  double horizon = 0.0;
  Hypothesis truth = Hypothesis::H0;
  std::size_t errors = 0;            // wrong decision at the horizon
  double error_rate = 0.0;
  double ci_lo = 0.0;                // Wilson 95% interval
  double ci_hi = 0.0;
  std::size_t absorbed = 0;
  double mean_absorption_time = 0.0;    // over absorbed trials; NaN if none
  double median_absorption_time = 0.0;  // over absorbed trials; NaN if none
  double frac_unabsorbed = 0.0;
  double cesaro_error = 0.0;         // time-averaged wrong-decision rate at the horizon
  std::vector<Snapshot> snapshots;   // t = 1, 2, 4, ...
};

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval at z = 1.96.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

/// Inverse-CDF sampler over a precomputed cumulative table.
class SymbolSampler {
 public:
  explicit SymbolSampler(const DiscreteDistribution& p);
  Symbol operator()(Rng& rng) const;

 private:
  std::vector<double> cdf_;
  std::vector<Symbol> support_;
};

std::vector<Symbol> sample_stream(const DiscreteDistribution& p, std::size_t len, Rng& rng);

/// Worker count after applying MEMTEST_THREADS.
std::size_t worker_count(std::size_t requested);

/// 50x the exact mean absorption time from the machine's start. Infinite when
/// that mean exceeds the double range; the stream engine clamps it anyway.
double default_horizon(const Machine& m, const DiscreteDistribution& source);

/// Step-by-step engine: feeds i.i.d. symbols through the machine. Trial t uses
/// the generator forked from (seed, t), so results do not depend on thread
/// count. Horizons above kStreamHorizonCap are clamped.
inline constexpr double kStreamHorizonCap = 1e9;
SimReport simulate(const Machine& m, const DiscreteDistribution& source, Hypothesis truth,
                   const SimConfig& cfg);

/// Run-compressed engine for machines built from chains (see TesterLayout).
/// Each chain's exit and duration are drawn from the exact law of the first
/// run of (N - s) ones or (s - 1) zeros in its watched sub-stream, so trials
/// cost O(chains) regardless of how long absorption takes. Durations that
/// sum many failed runs use a normal approximation; exits are exact.
SimReport simulate_chains(const Machine& m, const TesterLayout& layout,
                          const DiscreteDistribution& source, Hypothesis truth,
                          const SimConfig& cfg);

/// Sweep over tester constructions and sources.
struct SweepCell {
  std::string construction;  // "quadratic", "minichain", "paninski-pair"
  std::size_t n = 2;
  double eps = 0.5;
  double delta = 0.1;
  std::string source = "uniform";  // "uniform" or "paninski" (all signs +1)
};

struct SweepRow {
  SweepCell cell;
  std::size_t states = 0;
  double exact_mean_time = 0.0;
  double exact_error = 0.0;
  SimReport report;
};

struct Sweep {
  std::vector<SweepRow> rows;
  /// Exact mean absorption time strictly increases with n within every group
  /// sharing (construction, eps, delta, source).
  bool monotone_in_n = true;
};

/// Builds each cell's machine, analyzes it exactly and simulates it. Chain
/// testers use the run-compressed engine, the rest the stream engine with a
/// horizon of cfg.max_steps.
Sweep sample_complexity_sweep(const std::vector<SweepCell>& cells, const SimConfig& cfg);

Json report_to_json(const SimReport& r);
std::string sweep_csv(const Sweep& sweep);
Json sweep_to_json(const Sweep& sweep);

}  // namespace memtest
