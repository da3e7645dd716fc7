#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "memtest/constructions.hpp"
#include "memtest/errors.hpp"
#include "memtest/markov.hpp"
#include "memtest/rng.hpp"
#include "memtest/verify.hpp"

using namespace memtest;

namespace {

TransitionMatrix two_state(double a, double b) {
  Eigen::MatrixXd P(2, 2);
  P << 1 - a, a, b, 1 - b;
  return TransitionMatrix::from_dense(P);
}

// Oracle: power iteration on the lazy chain (I + P) / 2.
Eigen::RowVectorXd power_iteration(const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd L = 0.5 * (Eigen::MatrixXd::Identity(P.rows(), P.cols()) + P);
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(P.rows(), 1.0 / P.rows());
  for (int it = 0; it < 200000; ++it) {
    const Eigen::RowVectorXd next = v * L;
    if ((next - v).lpNorm<1>() < 1e-15) return next;
    v = next;
  }
  return v;
}

// Oracle: average of e_init P^t over a long window.
Eigen::RowVectorXd brute_cesaro(const Eigen::MatrixXd& P, StateIndex init, int steps) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(P.rows());
  v(static_cast<Eigen::Index>(init)) = 1.0;
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(P.rows());
  for (int t = 0; t < steps; ++t) {
    sum += v;
    v = v * P;
  }
  return sum / steps;
}

// Oracle: dense LU solve of (I - Q) h = R for the absorbing chain.
Eigen::MatrixXd dense_absorption(const Eigen::MatrixXd& P, const Decomposition& dec) {
  const auto T = static_cast<Eigen::Index>(dec.transient.size());
  const auto K = static_cast<Eigen::Index>(dec.classes.size());
  Eigen::MatrixXd Q(T, T), R = Eigen::MatrixXd::Zero(T, K);
  for (Eigen::Index a = 0; a < T; ++a) {
    for (Eigen::Index b = 0; b < T; ++b) {
      Q(a, b) = P(static_cast<Eigen::Index>(dec.transient[a]), static_cast<Eigen::Index>(dec.transient[b]));
    }
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const int k = dec.class_of[static_cast<std::size_t>(j)];
      if (k >= 0) R(a, k) += P(static_cast<Eigen::Index>(dec.transient[a]), j);
    }
  }
  return (Eigen::MatrixXd::Identity(T, T) - Q).partialPivLu().solve(R);
}

}  // namespace

TEST(TransitionMatrix, Validation) {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  EXPECT_THROW(TransitionMatrix::from_dense(bad), InputError);
  bad << -0.1, 1.1, 0.5, 0.5;
  EXPECT_THROW(TransitionMatrix::from_dense(bad), InputError);
  EXPECT_THROW(TransitionMatrix::from_dense(Eigen::MatrixXd(2, 3)), InputError);
}

TEST(InducedMatrix, IdentityAndLastSymbol) {
  Machine::Builder id(3, 4);
  const auto I = induced_matrix(std::move(id).build(), DiscreteDistribution::uniform(4)).dense();
  EXPECT_TRUE(I.isApprox(Eigen::MatrixXd::Identity(3, 3)));

  Machine::Builder b(2, 4);
  for (StateIndex s = 0; s < 2; ++s) {
    b.fallback(s, 0);
    b.transition(s, 0, 1);
  }
  const auto P = induced_matrix(std::move(b).build(), DiscreteDistribution::uniform(4)).dense();
  Eigen::MatrixXd want(2, 2);
  want << 0.75, 0.25, 0.75, 0.25;
  EXPECT_LT((P - want).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Classify, Cases) {
  EXPECT_TRUE(classify(two_state(0.3, 0.4)).irreducible());

  const auto isit = build_isit(IsitParams{8, 0.7, 0.3, 4});
  const auto dec = classify(induced_matrix(isit.machine, DiscreteDistribution({0.4, 0.6})));
  ASSERT_EQ(dec.classes.size(), 2u);
  EXPECT_EQ(dec.classes[0], std::vector<StateIndex>{0});
  EXPECT_EQ(dec.classes[1], std::vector<StateIndex>{7});
  EXPECT_EQ(dec.transient.size(), 6u);

  Eigen::MatrixXd blocks = Eigen::MatrixXd::Zero(4, 4);
  blocks.topLeftCorner(2, 2) << 0.5, 0.5, 0.5, 0.5;
  blocks.bottomRightCorner(2, 2) << 0.1, 0.9, 1.0, 0.0;
  EXPECT_EQ(classify(TransitionMatrix::from_dense(blocks)).classes.size(), 2u);
}

TEST(Stationary, ClosedForms) {
  const double a = 0.3, b = 0.05;
  const std::vector<StateIndex> both{0, 1};
  const auto pi = stationary(two_state(a, b), both);
  EXPECT_NEAR(pi[0], b / (a + b), 1e-15);
  EXPECT_NEAR(pi[1], a / (a + b), 1e-15);

  Eigen::MatrixXd ds(3, 3);
  ds << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2;
  const std::vector<StateIndex> all{0, 1, 2};
  for (double v : stationary(TransitionMatrix::from_dense(ds), all)) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
}

TEST(Stationary, MatchesPowerIteration) {
  Rng rng(5);
  for (int rep = 0; rep < 5; ++rep) {
    const auto P = random_irreducible_chain(50, rng);
    std::vector<StateIndex> all(50);
    std::iota(all.begin(), all.end(), 0);
    const auto pi = stationary(P, all);
    const auto oracle = power_iteration(P.dense());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(pi[i], oracle(static_cast<Eigen::Index>(i)), 1e-8);
  }
}

TEST(Absorption, IsitHandValues) {
  const auto isit = build_isit(IsitParams{4, 0.75, 0.25, 2});
  const auto a = analyze(isit.machine, DiscreteDistribution({0.5, 0.5}));
  ASSERT_EQ(a.absorption.size(), 2u);
  EXPECT_NEAR(a.absorption[1], 0.25, 1e-15);
  EXPECT_NEAR(a.absorption[0], 0.75, 1e-15);
  EXPECT_NEAR(a.mean_absorption_time, 1.5, 1e-15);
}

TEST(Absorption, GamblersRuinAndIndicators) {
  const std::size_t S = 11;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  P(0, 0) = P(S - 1, S - 1) = 1;
  for (std::size_t i = 1; i + 1 < S; ++i) P(i, i - 1) = P(i, i + 1) = 0.5;
  const auto T = TransitionMatrix::from_dense(P);
  const auto dec = classify(T);
  const auto mid = absorption(T, dec, 5);
  EXPECT_NEAR(mid[0], 0.5, 1e-14);
  EXPECT_NEAR(mid[1], 0.5, 1e-14);
  EXPECT_EQ(absorption(T, dec, 0), (std::vector<double>{1.0, 0.0}));
  EXPECT_NEAR(analyze(T, 5).mean_absorption_time, 25.0, 1e-10);  // i (S-1-i)
}

TEST(Absorption, MatchesDenseSolve) {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const auto T = random_absorbing_chain(40, rng);
    const auto dec = classify(T);
    const auto sol = solve_absorption(T, dec);
    const Eigen::MatrixXd oracle = dense_absorption(T.dense(), dec);
    for (std::size_t t = 0; t < dec.transient.size(); ++t) {
      for (std::size_t k = 0; k < dec.classes.size(); ++k) {
        EXPECT_NEAR(sol.at(dec.transient[t], k),
                    oracle(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)), 1e-9);
      }
    }
    EXPECT_LE(sol.row_sum_residual, 1e-9);
  }
}

TEST(Absorption, LongChainsKeepRelativeAccuracy) {
  // Escape probabilities far below the double range.
  const auto isit = build_isit(2394, 0.532609, 0.516304);
  const auto a = analyze(isit.machine, DiscreteDistribution({0.5, 0.5}));
  EXPECT_NEAR(a.absorption[0] + a.absorption[1], 1.0, 1e-12);
}

TEST(Cesaro, MatchesBruteForceAverage) {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    const auto T = random_absorbing_chain(15, rng);
    const auto a = analyze(T, 0);
    const auto oracle = brute_cesaro(T.dense(), 0, 20000);
    for (std::size_t i = 0; i < 15; ++i) {
      EXPECT_NEAR(a.cesaro[i], oracle(static_cast<Eigen::Index>(i)), 5e-3);
    }
  }
}

TEST(ErrorProbability, ConstantMachine) {
  Machine::Builder b(1, 3);
  const auto m = std::move(b).build();
  EXPECT_EQ(error_probability(m, DiscreteDistribution::uniform(3), Hypothesis::H0), 0.0);
  EXPECT_EQ(error_probability(m, DiscreteDistribution({0.5, 0.5, 0.0}), Hypothesis::H1), 1.0);
}

TEST(ChainInvariants, RandomChains) {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    const auto T = random_absorbing_chain(25, rng);
    const auto a = analyze(T, rng.below(25));
    EXPECT_LE(a.absorption_residual, 1e-9);
    EXPECT_LE(a.stationary_residual, 1e-9);
    const std::vector<Hypothesis> dec(25, Hypothesis::H1);
    const double pe = error_probability(a, dec, Hypothesis::H0);
    EXPECT_GE(pe, 0.0);
    EXPECT_LE(pe, 1.0);
  }
}

TEST(HittingTimes, HandValues) {
  const auto isit = build_isit(IsitParams{4, 0.75, 0.25, 2});
  const auto T = induced_matrix(isit.machine, DiscreteDistribution({0.5, 0.5}));
  const std::vector<StateIndex> ends{0, 3};
  const auto h = expected_hitting_times(T, ends);
  EXPECT_NEAR(h[1], 1.5, 1e-14);
  EXPECT_EQ(h[0], 0.0);
  EXPECT_EQ(h[3], 0.0);
}

TEST(HittingTimes, ConditionedMatchesMonteCarlo) {
  // From state 2 (index 1): reaching 4 takes exactly two steps; reaching 1
  // given it happens has mean (1*1/2 + 2*1/4) / (3/4) = 4/3.
  const auto isit = build_isit(IsitParams{4, 0.75, 0.25, 2});
  const auto T = induced_matrix(isit.machine, DiscreteDistribution({0.5, 0.5}));
  const std::vector<StateIndex> low{0}, high{3};
  const auto to_low = expected_hitting_times(T, low, std::span<const StateIndex>(low));
  const auto to_high = expected_hitting_times(T, high, std::span<const StateIndex>(high));
  EXPECT_NEAR(to_low[1], 4.0 / 3, 1e-12);
  EXPECT_NEAR(to_high[1], 2.0, 1e-12);

  // Monte Carlo on a random absorbing chain.
  Rng rng(77);
  const auto R = random_absorbing_chain(12, rng);
  const auto dec = classify(R);
  const auto& target = dec.classes.front();
  const auto exact = expected_hitting_times(R, target, std::span<const StateIndex>(target));
  const Eigen::MatrixXd D = R.dense();
  const StateIndex from = dec.transient.front();
  double sum = 0, sumsq = 0;
  std::size_t hits = 0;
  for (int t = 0; t < 100000; ++t) {
    StateIndex s = from;
    double steps = 0;
    while (dec.class_of[s] < 0) {
      double u = rng.uniform01();
      StateIndex next = 0;
      for (Eigen::Index j = 0; j < D.cols(); ++j) {
        u -= D(static_cast<Eigen::Index>(s), j);
        if (u < 0) {
          next = static_cast<StateIndex>(j);
          break;
        }
        next = static_cast<StateIndex>(j);
      }
      s = next;
      ++steps;
    }
    if (dec.class_of[s] == 0) {
      ++hits;
      sum += steps;
      sumsq += steps * steps;
    }
  }
  ASSERT_GT(hits, 100u);
  const double mean = sum / hits;
  const double se = std::sqrt((sumsq / hits - mean * mean) / hits);
  EXPECT_NEAR(exact[from], mean, 3 * se + 1e-9);
}

TEST(MixingTime, SmallCasesAndBruteForce) {
  Eigen::MatrixXd same(3, 3);
  same << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  EXPECT_EQ(mixing_time(TransitionMatrix::from_dense(same)), 1u);
  EXPECT_EQ(mixing_time(two_state(0.5, 0.5)), 1u);

  Rng rng(13);
  const auto P = random_irreducible_chain(20, rng);
  const std::size_t t = mixing_time(P);
  std::vector<StateIndex> all(20);
  std::iota(all.begin(), all.end(), 0);
  const auto pi = stationary(P, all);
  const Eigen::MatrixXd D = P.dense();
  auto worst_tv = [&](std::size_t steps) {
    Eigen::MatrixXd Pt = Eigen::MatrixXd::Identity(20, 20);
    for (std::size_t k = 0; k < steps; ++k) Pt = Pt * D;
    double worst = 0;
    for (Eigen::Index i = 0; i < 20; ++i) {
      double tv = 0;
      for (Eigen::Index j = 0; j < 20; ++j) tv += std::abs(Pt(i, j) - pi[static_cast<std::size_t>(j)]);
      worst = std::max(worst, tv / 2);
    }
    return worst;
  };
  EXPECT_LE(worst_tv(t), 0.25);
  if (t > 1) EXPECT_GT(worst_tv(t - 1), 0.25);
}

TEST(Ergodicize, TwoAbsorbingStates) {
  Eigen::MatrixXd P(3, 3);
  P << 1, 0, 0, 0.3, 0.2, 0.5, 0, 0, 1;
  const auto e = ergodicize(TransitionMatrix::from_dense(P), 1, 100);
  EXPECT_TRUE(e.changed);
  EXPECT_TRUE(classify(e.result).irreducible());
  EXPECT_NEAR(e.absorption[0], 0.375, 1e-15);
  EXPECT_LE(std::abs(e.stationary[0] - 0.375), 1.0 / 101);
  EXPECT_LE(std::abs(e.stationary[2] - 0.625), 1.0 / 101);
  EXPECT_TRUE(e.class_mass_bound_holds());
  EXPECT_GE(e.within_class_margin(), -1e-12);
}

TEST(Ergodicize, ConvergesAsSlackGrows) {
  Rng rng(3);
  const auto T = random_absorbing_chain(15, rng);
  const auto dec = classify(T);
  const StateIndex init = dec.transient.front();
  const auto e = ergodicize(T, init, 1e6);
  EXPECT_LE(e.class_mass_error(), 2e-6);
}

TEST(Ergodicize, IrreducibleIsNoOp) {
  const auto e = ergodicize(two_state(0.3, 0.2), 0, 10);
  EXPECT_FALSE(e.changed);
  EXPECT_FALSE(e.notice.empty());
}

TEST(Kac, ClosedFormsAndRandom) {
  EXPECT_LE(kac_check(two_state(0.3, 0.6)), 1e-12);
  const std::size_t S = 7;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(S, S);
  for (std::size_t i = 0; i < S; ++i) {
    C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>((i + 1) % S)) = 0.5;
    C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>((i + S - 1) % S)) = 0.5;
  }
  const auto cycle = TransitionMatrix::from_dense(C);
  const std::vector<StateIndex> zero{0};
  const auto h = expected_hitting_times(cycle, zero);
  // return time = 1 + mean hitting time from a neighbour
  EXPECT_NEAR(1 + 0.5 * (h[1] + h[S - 1]), static_cast<double>(S), 1e-10);
  EXPECT_LE(kac_check(cycle), 1e-10);
  Rng rng(44);
  EXPECT_LE(kac_check(random_irreducible_chain(30, rng)), 1e-8);
}

TEST(FlowBalance, Cuts) {
  Rng rng(45);
  const auto P = random_irreducible_chain(12, rng);
  std::vector<StateIndex> all(12);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(flow_balance_check(P, all), 0.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<StateIndex> cut;
    for (StateIndex s = 0; s < 12; ++s) {
      if (rng.below(2)) cut.push_back(s);
    }
    EXPECT_LE(flow_balance_check(P, cut), 1e-10);
  }
  const auto pi = stationary(P, all);
  const Eigen::MatrixXd D = P.dense();
  const StateIndex i = 3;
  double inflow = 0;
  for (Eigen::Index j = 0; j < 12; ++j) {
    if (j != 3) inflow += pi[static_cast<std::size_t>(j)] * D(j, 3);
  }
  EXPECT_NEAR(pi[i] * (1 - D(3, 3)), inflow, 1e-12);
}
