#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/errors.hpp"
#include "memtest/markov.hpp"
#include "memtest/rng.hpp"
#include "memtest/verify.hpp"

using namespace memtest;

namespace {

Machine last_symbol_machine(std::size_t n) {
  Machine::Builder b(2, n);
  for (StateIndex s = 0; s < 2; ++s) {
    b.fallback(s, 0);
    b.transition(s, 0, 1);
  }
  b.decision(1, Hypothesis::H1);
  return std::move(b).build();
}

double l1(const Eigen::VectorXd& x) { return x.lpNorm<1>(); }

}  // namespace

TEST(Vertex, ZeroSumPlane) {
  Eigen::MatrixXd V(3, 2);
  V << 1, 1, -1, 0, 0, -1;
  const auto x = polytope_vertex(V);
  EXPECT_NEAR(x.cwiseAbs().maxCoeff(), 1.0, 1e-12);
  EXPECT_NEAR(x.sum(), 0.0, 1e-12);
  EXPECT_NEAR(l1(x), 2.0, 1e-12);  // every vertex of the hexagon is a permutation of (1,-1,0)
  EXPECT_GE(count_saturated(x), 2u);
}

TEST(Vertex, SingleAxis) {
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(4, 1);
  V(2, 0) = 3.0;
  const auto x = polytope_vertex(V);
  EXPECT_NEAR(std::abs(x(2)), 1.0, 1e-12);
  EXPECT_NEAR(l1(x), 1.0, 1e-12);
}

TEST(Vertex, AgreesWithActiveSetEnumeration) {
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd V(8, 3);
    for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = rng.normal();
    const auto x = polytope_vertex(V, rep);
    EXPECT_GE(count_saturated(x), 3u);
    EXPECT_GE(l1(x), 3.0 - 1e-9);
    // x lies in the span of V and is one of the enumerated vertices
    const Eigen::VectorXd c = V.colPivHouseholderQr().solve(x);
    EXPECT_LT((V * c - x).norm(), 1e-9);
    bool found = false;
    for (const auto& v : enumerate_vertices(V)) found = found || (v - x).cwiseAbs().maxCoeff() < 1e-7;
    EXPECT_TRUE(found);
  }
}

TEST(Vertex, RejectsRankDeficient) {
  Eigen::MatrixXd V(3, 2);
  V << 1, 2, 1, 2, 1, 2;
  EXPECT_THROW(polytope_vertex(V), InputError);
}

TEST(Adversary, SingleStateMachine) {
  Machine::Builder b(1, 3);
  const auto m = std::move(b).build();
  const auto c = confusable_distribution(m, AdversaryMode::stationary, 1);
  EXPECT_EQ(c.k_lower_bound, 1);
  EXPECT_EQ(c.k, 2u);  // every zero-sum direction keeps pi = 1
  EXPECT_NEAR(c.guarantee, 2.0 / 6, 1e-12);
  EXPECT_GE(c.tv, 1.0 / 6 - 1e-12);
  EXPECT_TRUE(verify_certificate(m, c).ok);
}

TEST(Adversary, LastSymbolMachine) {
  const auto m = last_symbol_machine(4);
  EXPECT_THROW(confusable_distribution(m, AdversaryMode::transition, 1), CapacityError);
  const auto c = confusable_distribution(m, AdversaryMode::stationary, 1);
  // P depends only on q_1, so the certificate keeps q_1 = 1/4.
  EXPECT_NEAR(c.q[0], 0.25, 1e-12);
  EXPECT_GE(c.tv, 0.25 - 1e-12);
  const DiscreteDistribution q(c.q);
  const auto Pu = induced_matrix(m, DiscreteDistribution::uniform(4)).dense();
  const auto Pq = induced_matrix(m, q).dense();
  EXPECT_LT((Pu - Pq).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(error_probability(m, q, Hypothesis::H0),
              error_probability(m, DiscreteDistribution::uniform(4), Hypothesis::H0), 1e-12);
}

TEST(Adversary, RandomMachinesStationary) {
  Rng rng(2024);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = random_deterministic_machine(9, 20, rng);
    const auto c = confusable_distribution(m, AdversaryMode::stationary, rep);
    EXPECT_GE(c.tv, 0.25 - 1e-12);
    EXPECT_LE(stationary_residual(m, DiscreteDistribution(c.q)), 1e-9);
    EXPECT_TRUE(verify_certificate(m, c).ok);
  }
}

TEST(Adversary, RandomMachinesTransition) {
  Rng rng(77);
  for (int rep = 0; rep < 10; ++rep) {
    const auto m = random_irreducible_machine(3, 20, rng);
    const auto c = confusable_distribution(m, AdversaryMode::transition, rep);
    EXPECT_GE(c.tv, c.guarantee - 1e-12);
    EXPECT_LE(transition_residual(m, DiscreteDistribution(c.q)), 1e-12);
    EXPECT_GE(static_cast<long long>(c.k), c.k_lower_bound);
  }
}

TEST(Adversary, TamperedCertificateFails) {
  const auto m = last_symbol_machine(8);
  auto c = confusable_distribution(m, AdversaryMode::stationary, 2);
  ASSERT_TRUE(verify_certificate(m, c).ok);
  auto bad = c;
  bad.q[0] += 0.05;
  bad.q[1] -= 0.05;
  EXPECT_FALSE(verify_certificate(m, bad).ok);
  auto wrong_hash = c;
  wrong_hash.machine_hash = "0";
  EXPECT_FALSE(verify_certificate(m, wrong_hash).ok);
}

TEST(InducedMap, KernelDimensionBound) {
  Rng rng(9);
  const auto m = random_deterministic_machine(4, 30, rng);
  const auto map = induced_linear_map(m, AdversaryMode::transition);
  EXPECT_EQ(map.k_lower_bound, 30 - 1 - 16);
  EXPECT_GE(static_cast<long long>(map.k), map.k_lower_bound);
  EXPECT_LT((map.map() * map.basis).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((Eigen::RowVectorXd::Ones(30) * map.basis).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BinaryReduction, BinaryAlphabet) {
  const BinaryReduction r(2);
  Rng rng(1);
  // bit 1 maps to symbol 1 (0-based 0), bit 0 to symbol 2
  EXPECT_EQ(r.transform(true, rng), 0u);
  EXPECT_EQ(r.transform(false, rng), 1u);
}

TEST(BinaryReduction, LawAndFrequencies) {
  const BinaryReduction r(4);
  const auto law = r.symbol_law(0.35);
  EXPECT_NEAR(law[0], 0.175, 1e-15);
  EXPECT_NEAR(law[1], 0.325, 1e-15);

  Rng rng(6);
  for (double theta : {0.5, 0.35}) {
    std::vector<double> count(4, 0.0);
    const int len = 200000;
    for (int t = 0; t < len; ++t) count[r.transform(rng.uniform01() < theta, rng)] += 1;
    const auto expect = r.symbol_law(theta);
    for (Symbol x = 0; x < 4; ++x) {
      EXPECT_NEAR(count[x] / len, expect[x], 4 * std::sqrt(expect[x] * (1 - expect[x]) / len));
    }
  }
  const std::vector<int> z{1, 1};
  const auto pan = paninski(4, 0.3, z);
  for (Symbol x = 0; x < 4; ++x) EXPECT_NEAR(pan[x], law[x], 1e-15);
}

TEST(BinaryReduction, WrappedChainEqualsSymbolChain) {
  const auto t = build_paninski_pair_tester(0.5, 0.1, 6);
  const BinaryReduction r(6);
  const auto wrapped = r.wrap(t.machine);
  for (double theta : {0.5, 0.25, 0.9}) {
    const auto a = induced_matrix(wrapped, DiscreteDistribution({1 - theta, theta})).dense();
    const auto b = induced_matrix(t.machine, r.symbol_law(theta)).dense();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}
