#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memtest/distribution.hpp"
#include "memtest/machine.hpp"
#include "memtest/markov.hpp"
#include "memtest/rng.hpp"

namespace memtest {

struct VerifyOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 0;   // 0 = the suite's default count
  std::size_t threads = 0;  // 0 = hardware concurrency, capped by MEMTEST_THREADS
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// Seeded corpora shared by the suites and the tests.

/// Random point in the simplex; `spike` >= 1 sharpens it (1 = flat Dirichlet).
DiscreteDistribution random_distribution(std::size_t n, Rng& rng, double spike = 1.0);
/// Random p with tv(p, u) > eps; needs eps < 1 - 1/n.
DiscreteDistribution random_far_distribution(std::size_t n, double eps, Rng& rng);
/// Uniformly random deterministic kernel, init and decisions.
Machine random_deterministic_machine(std::size_t S, std::size_t n, Rng& rng);
/// As above, redrawn until the chain under u is irreducible.
Machine random_irreducible_machine(std::size_t S, std::size_t n, Rng& rng);
/// Irreducible, aperiodic (self-loops) dense-ish chain.
TransitionMatrix random_irreducible_chain(std::size_t S, Rng& rng);
/// Transient states 0..T-1 (state 0 reaches every class) followed by 1-3
/// recurrent classes; some classes are absorbing states, some periodic cycles.
TransitionMatrix random_absorbing_chain(std::size_t S, Rng& rng);

/// Every vertex of span(V) ∩ [-1,1]^n by active-set enumeration.
std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& V);

CriterionResult verify_isit_grid(const VerifyOptions& o);       // 1
CriterionResult verify_start_state(const VerifyOptions& o);     // 2
CriterionResult verify_coll_bound(const VerifyOptions& o);      // 3
CriterionResult verify_tester(const VerifyOptions& o);          // 4
CriterionResult verify_biased_pair(const VerifyOptions& o);     // 5
CriterionResult verify_adversary(const VerifyOptions& o);       // 6
CriterionResult verify_vertex(const VerifyOptions& o);          // 7
CriterionResult verify_ergodicize(const VerifyOptions& o);      // 8
CriterionResult verify_kac(const VerifyOptions& o);             // 9, return times
CriterionResult verify_flow_balance(const VerifyOptions& o);    // 9, cut flows
CriterionResult verify_kac_flow(const VerifyOptions& o);        // 9
CriterionResult verify_paninski_pair(const VerifyOptions& o);   // 10
CriterionResult verify_reduction(const VerifyOptions& o);       // 11
CriterionResult verify_agreement(const VerifyOptions& o);       // 12

std::vector<CriterionResult> verify_all(const VerifyOptions& o);

/// "PASS  4  mini-chain tester  (12.3 s)  detail".
std::string format_result(const CriterionResult& r);

}  // namespace memtest
