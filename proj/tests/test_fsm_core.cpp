#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/distribution.hpp"
#include "memtest/errors.hpp"
#include "memtest/machine.hpp"
#include "memtest/rng.hpp"

using namespace memtest;

namespace {

Machine identity_machine(std::size_t S, std::size_t n) {
  Machine::Builder b(S, n);
  return std::move(b).build();
}

}  // namespace

TEST(Distribution, RejectsInvalidVectors) {
  EXPECT_THROW(DiscreteDistribution({}), InputError);
  EXPECT_THROW(DiscreteDistribution({0.5, 0.6}), InputError);
  EXPECT_THROW(DiscreteDistribution({1.5, -0.5}), InputError);
  EXPECT_THROW(DiscreteDistribution({NAN, 1.0}), InputError);
  EXPECT_NO_THROW(DiscreteDistribution({0.25, 0.75}));
}

TEST(Distribution, TotalVariation) {
  const auto u = DiscreteDistribution::uniform(5);
  EXPECT_DOUBLE_EQ(tv_distance(u, u), 0.0);
  EXPECT_DOUBLE_EQ(tv_distance(DiscreteDistribution({1, 0}), DiscreteDistribution({0, 1})), 1.0);
  for (int sign : {1, -1}) {
    std::vector<int> z{sign, -sign, 1};
    // tv is half the l1 distance, so the l1 gap is eps
    const auto p = paninski(6, 0.3, z);
    EXPECT_NEAR(tv_distance(p, DiscreteDistribution::uniform(6)), 0.15, 1e-12);
    double l1 = 0;
    for (double v : p.probs()) l1 += std::abs(v - 1.0 / 6);
    EXPECT_NEAR(l1, 0.3, 1e-12);
  }
  EXPECT_THROW(tv_distance(DiscreteDistribution::uniform(2), u), InputError);
}

TEST(Distribution, Collision) {
  EXPECT_NEAR(collision_probability(DiscreteDistribution::uniform(7)), 1.0 / 7, 1e-15);
  EXPECT_NEAR(collision_probability(DiscreteDistribution({0.5, 0.5, 0, 0})), 0.5, 1e-15);
  const std::vector<int> z{1, 1, -1, 1};
  EXPECT_NEAR(collision_probability(paninski(8, 0.4, z)), (1 + 0.16) / 8, 1e-15);
}

TEST(Distribution, PairConditional) {
  EXPECT_DOUBLE_EQ(pair_conditional(DiscreteDistribution::uniform(4), 0, 1), 0.5);
  EXPECT_NEAR(pair_conditional(DiscreteDistribution({0.2, 0.6, 0.2}), 1, 0), 0.75, 1e-15);
  const std::vector<int> z{1, 1};
  EXPECT_NEAR(pair_conditional(paninski(4, 0.5, z), 1, 0), 0.75, 1e-15);
  EXPECT_THROW(pair_conditional(DiscreteDistribution({0, 0, 1}), 0, 1), InputError);
}

TEST(Paninski, Properties) {
  const std::vector<int> zero_z{1, -1};
  const auto p = paninski(4, 0.0, zero_z);
  for (double v : p.probs()) EXPECT_DOUBLE_EQ(v, 0.25);
  EXPECT_THROW(paninski(5, 0.1, zero_z), InputError);
  const std::vector<int> bad{1, 2};
  EXPECT_THROW(paninski(4, 0.1, bad), InputError);
}

TEST(Machine, IdentityStep) {
  const auto m = identity_machine(5, 3);
  Rng rng(1);
  EXPECT_EQ(step(m, 3, 1, rng), 3u);
  EXPECT_TRUE(m.is_deterministic());
}

TEST(Machine, BuilderValidates) {
  Machine::Builder b(2, 2);
  EXPECT_THROW(b.transition(0, 2, 1), InputError);
  EXPECT_THROW(b.transition(2, 0, 1), InputError);
  EXPECT_THROW(b.transition(0, 0, SuccessorList{{0, 0.3}, {1, 0.3}}), InputError);
  EXPECT_THROW(b.init(5), InputError);
}

TEST(Machine, IsitHandTrace) {
  // states 1..4 stored at 0..3, start 2
  const auto isit = build_isit(IsitParams{4, 0.75, 0.25, 2});
  Rng rng(3);
  EXPECT_EQ(step(isit.machine, 1, 1, rng), 2u);  // 2 -> 3 on a one
  EXPECT_EQ(step(isit.machine, 2, 0, rng), 0u);  // 3 -> 1 on a zero

  const std::vector<Symbol> ones{1, 1};
  const auto t1 = run(isit.machine, ones, rng);
  EXPECT_EQ(t1.states.back(), 3u);
  ASSERT_TRUE(t1.absorbed.has_value());
  EXPECT_EQ(t1.absorbed->step, 2u);

  const std::vector<Symbol> zero{0};
  const auto t2 = run(isit.machine, zero, rng);
  EXPECT_EQ(t2.states.back(), 0u);
  ASSERT_TRUE(t2.absorbed.has_value());
  EXPECT_EQ(t2.absorbed->step, 1u);

  const auto t3 = run(isit.machine, std::span<const Symbol>{}, rng);
  ASSERT_EQ(t3.states.size(), 1u);
  EXPECT_EQ(t3.states[0], isit.machine.init());
  EXPECT_FALSE(t3.absorbed.has_value());
}

TEST(Machine, DeterministicRunIgnoresSeed) {
  const auto tester = build_minichain_tester(4, 0.5, 0.2);
  Rng draw(11);
  std::vector<Symbol> stream(5000);
  for (auto& x : stream) x = draw.below(4);
  Rng a(1), b(999);
  const auto ta = run(tester.machine, stream, a);
  const auto tb = run(tester.machine, stream, b);
  EXPECT_EQ(ta.states, tb.states);
}

TEST(Machine, RandomizedRowsUseRng) {
  Machine::Builder b(3, 1);
  b.transition(0, 0, SuccessorList{{1, 0.5}, {2, 0.5}});
  const auto m = std::move(b).build();
  EXPECT_FALSE(m.is_deterministic());
  Rng rng(5);
  std::size_t hits = 0;
  const std::size_t trials = 20000;
  for (std::size_t t = 0; t < trials; ++t) hits += step(m, 0, 0, rng) == 1;
  EXPECT_NEAR(static_cast<double>(hits) / trials, 0.5, 4 * std::sqrt(0.25 / trials));
}

TEST(Rng, ForksAreReproducible) {
  Rng root(42);
  Rng a = root.fork(7), b = root.fork(7), c = root.fork(8);
  EXPECT_EQ(a(), b());
  EXPECT_NE(a(), c());
  for (int i = 0; i < 1000; ++i) {
    const double u = root.uniform_open01();
    EXPECT_GT(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(root.below(3), 3u);
  }
}
