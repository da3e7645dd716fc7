#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/markov.hpp"
#include "memtest/rng.hpp"
#include "memtest/simulate.hpp"
#include "memtest/verify.hpp"

using namespace memtest;

TEST(Properties, TvIsAMetric) {
  Rng rng(1);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 2 + rng.below(30);
    const auto p = random_distribution(n, rng);
    const auto q = random_distribution(n, rng);
    const auto r = random_distribution(n, rng);
    EXPECT_EQ(tv_distance(p, q), tv_distance(q, p));
    EXPECT_LE(tv_distance(p, r), tv_distance(p, q) + tv_distance(q, r) + 1e-12);
    EXPECT_GE(tv_distance(p, q), 0.0);
    EXPECT_LE(tv_distance(p, q), 1.0);
  }
}

TEST(Properties, DistributionsAreNormalized) {
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rng.below(40);
    for (const auto& p : {random_distribution(n, rng), random_far_distribution(n, 0.3, rng)}) {
      double sum = 0;
      for (double v : p.probs()) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(Properties, TraceLength) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto m = random_irreducible_machine(5, 4, rng);
    std::vector<Symbol> stream(rng.below(100));
    for (auto& x : stream) x = rng.below(4);
    const auto trace = run(m, stream, rng);
    ASSERT_EQ(trace.states.size(), stream.size() + 1);
    EXPECT_EQ(trace.states.front(), m.init());
  }
}

TEST(Properties, MinichainParameters) {
  for (std::size_t n : {2, 3, 4, 8}) {
    for (double eps : {0.25, 0.5}) {
      const double delta = 0.2;
      const auto t = build_minichain_tester(n, eps, delta);
      EXPECT_EQ(t.layout.tilde_eps, eps / (8 + 4 * eps));
      for (const auto& c : t.layout.chains) {
        if (c.quantity == TestedQuantity::pair_first || c.quantity == TestedQuantity::pair_second) {
          EXPECT_DOUBLE_EQ(c.budget, (delta / 2) / (2.0 * n));
        }
        EXPECT_EQ(c.isit.start, isit_start_state(c.isit.N, c.isit.p, c.isit.q));
      }
      EXPECT_LE(static_cast<double>(t.machine.num_states()), minichain_size_bound(n, eps, delta));
    }
  }
}

TEST(Properties, ClassesPartitionStates) {
  Rng rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const auto P = random_absorbing_chain(30, rng);
    const auto dec = classify(P);
    std::vector<int> seen(30, 0);
    for (const auto& c : dec.classes) {
      for (StateIndex s : c) ++seen[s];
    }
    for (StateIndex s : dec.transient) ++seen[s];
    for (int v : seen) EXPECT_EQ(v, 1);
  }
}

TEST(Properties, ErgodicizeEdges) {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto P = random_absorbing_chain(12, rng);
    const auto dec = classify(P);
    const StateIndex init = dec.transient.front();
    const auto e = ergodicize(P, init, 50);
    const auto base = P.dense();
    const auto res = e.result.dense();
    const double d = e.connect_prob;
    for (const auto& cls : dec.classes) {
      for (StateIndex s : cls) {
        for (Eigen::Index j = 0; j < 12; ++j) {
          const double want = (1 - d) * base(static_cast<Eigen::Index>(s), j) +
                              (static_cast<StateIndex>(j) == init ? d : 0.0);
          EXPECT_NEAR(res(static_cast<Eigen::Index>(s), j), want, 1e-15);
        }
      }
    }
  }
}

TEST(Properties, InducedMapStructure) {
  Rng rng(6);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t S = 3, n = 15;
    const auto m = random_irreducible_machine(S, n, rng);
    const auto A = transition_tensor(m);
    for (Eigen::Index x = 0; x < static_cast<Eigen::Index>(n); ++x) {
      for (std::size_t i = 0; i < S; ++i) {
        double row = 0;
        for (std::size_t j = 0; j < S; ++j) {
          const double v = A(static_cast<Eigen::Index>(i * S + j), x);
          EXPECT_GE(v, 0.0);
          row += v;
        }
        EXPECT_NEAR(row, 1.0, 1e-12);
      }
    }
    const auto map = induced_linear_map(m, AdversaryMode::stationary);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / n);
    const Eigen::VectorXd Bu = map.B * u;
    for (std::size_t j = 0; j < S; ++j) EXPECT_NEAR(Bu(static_cast<Eigen::Index>(j)), map.pi_u[j], 1e-10);
    EXPECT_GE(static_cast<long long>(map.k), map.k_lower_bound);
  }
}

TEST(Properties, ReportRatesAndIntervals) {
  const auto isit = build_isit(IsitParams{8, 0.7, 0.3, 4});
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const double theta = rng.uniform01();
    SimConfig cfg;
    cfg.trials = 200;
    cfg.max_steps = 50;
    cfg.seed = rep;
    const auto r = simulate(isit.machine, DiscreteDistribution({1 - theta, theta}), Hypothesis::H1, cfg);
    EXPECT_GE(r.error_rate, 0.0);
    EXPECT_LE(r.error_rate, 1.0);
    EXPECT_LE(r.ci_lo, r.error_rate);
    EXPECT_GE(r.ci_hi, r.error_rate);
    EXPECT_GE(r.cesaro_error, 0.0);
    EXPECT_LE(r.cesaro_error, 1.0);
    EXPECT_GE(r.frac_unabsorbed, 0.0);
    EXPECT_LE(r.frac_unabsorbed, 1.0);
  }
  SimConfig bad;
  bad.trials = 0;
  EXPECT_ANY_THROW(simulate(isit.machine, DiscreteDistribution({0.5, 0.5}), Hypothesis::H0, bad));
  bad.trials = 1;
  bad.max_steps = 0.5;
  EXPECT_ANY_THROW(simulate(isit.machine, DiscreteDistribution({0.5, 0.5}), Hypothesis::H0, bad));
}
