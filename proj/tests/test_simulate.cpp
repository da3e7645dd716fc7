#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/io.hpp"
#include "memtest/markov.hpp"
#include "memtest/simulate.hpp"

using namespace memtest;

TEST(Sampler, PointMassAndUniform) {
  Rng rng(1);
  const auto s = sample_stream(DiscreteDistribution::point_mass(5, 3), 1000, rng);
  for (Symbol x : s) EXPECT_EQ(x, 3u);

  // chi-square goodness of fit, 9 degrees of freedom; 0.001 quantile is 27.88
  const std::size_t n = 10, len = 1000000;
  Rng fixed(2024);
  std::vector<double> count(n, 0.0);
  for (Symbol x : sample_stream(DiscreteDistribution::uniform(n), len, fixed)) count[x] += 1;
  double chi2 = 0;
  for (double c : count) chi2 += (c - len / n) * (c - len / n) / (len / n);
  EXPECT_LT(chi2, 27.88);
}

TEST(Sampler, PaninskiFrequencies) {
  const std::vector<int> z{1, -1, -1};
  const auto p = paninski(6, 0.4, z);
  Rng rng(3);
  const std::size_t len = 300000;
  std::vector<double> count(6, 0.0);
  for (Symbol x : sample_stream(p, len, rng)) count[x] += 1;
  for (Symbol x = 0; x < 6; ++x) {
    EXPECT_NEAR(count[x] / len, p[x], 4 * std::sqrt(p[x] * (1 - p[x]) / len));
  }
}

TEST(Wilson, Bounds) {
  const auto i = wilson_interval(0, 100);
  EXPECT_EQ(i.lo, 0.0);
  EXPECT_GT(i.hi, 0.0);
  const auto j = wilson_interval(50, 100);
  EXPECT_LT(j.lo, 0.5);
  EXPECT_GT(j.hi, 0.5);
}

TEST(Simulate, ConstantMachine) {
  Machine::Builder b(1, 3);
  const auto m = std::move(b).build();
  SimConfig cfg;
  cfg.trials = 50;
  cfg.max_steps = 100;
  const auto r = simulate(m, DiscreteDistribution::uniform(3), Hypothesis::H0, cfg);
  EXPECT_EQ(r.errors, 0u);
  EXPECT_EQ(r.error_rate, 0.0);
}

TEST(Simulate, IsitExactValues) {
  const auto isit = build_isit(IsitParams{4, 0.75, 0.25, 2});
  SimConfig cfg;
  cfg.trials = 1000000;
  cfg.max_steps = 1000;
  cfg.seed = 9;
  // truth H1 counts the high end (H0 label) as the error
  const auto r = simulate(isit.machine, DiscreteDistribution({0.5, 0.5}), Hypothesis::H1, cfg);
  EXPECT_NEAR(r.error_rate, 0.25, 0.0013);
  EXPECT_NEAR(r.mean_absorption_time, 1.5, 0.002);
  EXPECT_EQ(r.frac_unabsorbed, 0.0);
}

TEST(Simulate, MinichainAgreesWithExact) {
  const auto t = build_minichain_tester(4, 0.5, 0.2);
  const std::vector<int> z{1, -1};
  // a source close to uniform so the error is not negligible
  const DiscreteDistribution near({0.25 + 0.0035, 0.25 - 0.0035, 0.25, 0.25});
  for (const auto& [p, truth] : {std::pair{DiscreteDistribution::uniform(4), Hypothesis::H0},
                                 std::pair{paninski(4, 0.5, z), Hypothesis::H1},
                                 std::pair{near, Hypothesis::H0}}) {
    const double exact = error_probability(t.machine, p, truth);
    SimConfig cfg;
    cfg.trials = 20000;
    cfg.max_steps = default_horizon(t.machine, p);
    const auto r = simulate_chains(t.machine, t.layout, p, truth, cfg);
    const double se = std::sqrt(std::max(exact * (1 - exact), 1e-6) / cfg.trials);
    EXPECT_NEAR(r.error_rate, exact, 3 * se) << exact;
  }
}

TEST(Simulate, RunEngineMatchesStreamEngineOnShortChains) {
  const auto t = build_isit(IsitParams{14, 0.7, 0.3, 7});
  const DiscreteDistribution p({0.55, 0.45});
  SimConfig cfg;
  cfg.trials = 20000;
  cfg.seed = 4;
  cfg.max_steps = 1e8;
  const auto a = simulate(t.machine, p, Hypothesis::H0, cfg);
  const auto b = simulate_chains(t.machine, t.layout, p, Hypothesis::H0, cfg);
  const double exact = error_probability(t.machine, p, Hypothesis::H0);
  const double se = std::sqrt(exact * (1 - exact) / cfg.trials);
  EXPECT_NEAR(a.error_rate, exact, 4 * se);
  EXPECT_NEAR(b.error_rate, exact, 4 * se);
  const double mean = analyze(t.machine, p).mean_absorption_time;
  EXPECT_NEAR(a.mean_absorption_time / mean, 1.0, 0.05);
  EXPECT_NEAR(b.mean_absorption_time / mean, 1.0, 0.05);
}

TEST(Simulate, Reproducible) {
  const auto isit = build_isit(IsitParams{6, 0.7, 0.3, 3});
  SimConfig cfg;
  cfg.trials = 2000;
  cfg.max_steps = 500;
  cfg.seed = 5;
  const auto a = simulate(isit.machine, DiscreteDistribution({0.4, 0.6}), Hypothesis::H0, cfg);
  cfg.threads = 1;
  const auto b = simulate(isit.machine, DiscreteDistribution({0.4, 0.6}), Hypothesis::H0, cfg);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
}

TEST(Simulate, CesaroSnapshotsInRange) {
  const auto isit = build_isit(IsitParams{6, 0.7, 0.3, 3});
  SimConfig cfg;
  cfg.trials = 500;
  cfg.max_steps = 1024;
  const auto r = simulate(isit.machine, DiscreteDistribution({0.5, 0.5}), Hypothesis::H1, cfg);
  ASSERT_EQ(r.snapshots.size(), 11u);
  for (const auto& s : r.snapshots) {
    EXPECT_GE(s.cesaro_error, 0.0);
    EXPECT_LE(s.cesaro_error, 1.0);
  }
}

TEST(Sweep, QuadraticTimesIncreaseWithN) {
  std::vector<SweepCell> cells;
  for (std::size_t n : {2, 4, 8}) cells.push_back({"quadratic", n, 0.5, 0.2, "uniform"});
  SimConfig cfg;
  cfg.trials = 200;
  cfg.max_steps = 1e6;
  const auto s = sample_complexity_sweep(cells, cfg);
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_TRUE(s.monotone_in_n);
  const std::string csv = sweep_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "construction,n,eps,delta,source,states,engine,trials,horizon,pe_hat,ci_lo,ci_hi,"
            "mean_abs_time,frac_unabsorbed,exact_pe,exact_mean_abs_time");
}

TEST(Sweep, SingleCellEqualsSimulate) {
  const std::vector<SweepCell> cells{{"paninski-pair", 2, 0.5, 0.1, "uniform"}};
  SimConfig cfg;
  cfg.trials = 300;
  const auto s = sample_complexity_sweep(cells, cfg);
  const auto t = build_paninski_pair_tester(0.5, 0.1, 2);
  const auto u = DiscreteDistribution::uniform(2);
  SimConfig same = cfg;
  same.max_steps = s.rows.front().report.horizon;
  const auto r = simulate_chains(t.machine, t.layout, u, Hypothesis::H0, same);
  EXPECT_EQ(report_to_json(r).dump(), report_to_json(s.rows.front().report).dump());
}
