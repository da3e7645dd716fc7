#pragma once

#include <optional>
#include <string>
#include <vector>

#include "memtest/distribution.hpp"
#include "memtest/machine.hpp"

namespace memtest {

// ---------------------------------------------------------------------------
// ISIT run-counting chain
// ---------------------------------------------------------------------------

/// Parameters of an N-state ISIT chain. States are numbered 1..N as in the
/// chain diagram; `start` is the initial state in {2, ..., N-1}.
struct IsitParams {
  std::size_t N = 0;
  double p = 0.0;  // upper hypothesis threshold: the chain drifts to N when theta > p
  double q = 0.0;  // lower hypothesis threshold: the chain drifts to 1 when theta < q
  std::size_t start = 0;
};

/// Start state 2 + round((N-3) * ln(pq) / (ln p(1-p) + ln q(1-q))), rounded
/// half-up and clamped into [2, N-1]. Requires N >= 4 and 0 < q < p < 1.
std::size_t isit_start_state(std::size_t N, double p, double q);

IsitParams make_isit_params(std::size_t N, double p, double q);

enum class SizingRange { strict, relaxed };

/// Chain length 3 + ceil(6K ln(2 / (delta (p - 1/K)(1 - p)))) that separates
/// theta >= p from theta <= p - 1/K with error below delta.
///
/// `strict` enforces 2/K <= p <= 1 - 1/K; `relaxed` only needs the logarithm to
/// be defined (1/K < p < 1).
std::size_t isit_size(double delta, double p, double K, SizingRange range = SizingRange::strict);

/// Which input symbols drive a chain. Symbols in `ones` push toward state N,
/// symbols in `zeros` toward state 1, all others leave the state unchanged.
struct Watch {
  std::size_t alphabet = 2;
  std::vector<Symbol> ones;
  std::vector<Symbol> zeros;

  /// Binary alphabet {0, 1}: symbol 1 is "one".
  static Watch bits();
  /// `symbol` is "one", every other symbol is "zero".
  static Watch marginal(std::size_t alphabet, Symbol symbol);
  /// `one` is "one", `zero` is "zero", every other symbol self-loops.
  static Watch pair(std::size_t alphabet, Symbol zero, Symbol one);

  /// Probability mass of the watched symbols and the conditional probability
  /// of a "one" among them (NaN when nothing is watched).
  double watched_mass(const DiscreteDistribution& p) const;
  double one_probability(const DiscreteDistribution& p) const;
};

/// Labels for the two ends and the interior of a stand-alone chain. The
/// defaults follow the ISIT definition: reaching N decides theta > p.
struct IsitDecisions {
  Hypothesis low_end = Hypothesis::H1;
  Hypothesis high_end = Hypothesis::H0;
  Hypothesis interior = Hypothesis::H0;
};

/// Successor (in 1..N) of ISIT state `i` on a one (`bit` = true) or zero.
std::size_t isit_next(const IsitParams& params, std::size_t i, bool bit);

// ---------------------------------------------------------------------------
// Chain layouts
// ---------------------------------------------------------------------------

enum class TestedQuantity {
  bit,          // Bernoulli parameter of a binary stream
  marginal,     // p_1
  pair_first,   // p_1 conditioned on {1, i}
  pair_second,  // p_i conditioned on {1, i}
};

/// Where a chain goes when it reaches one of its ends.
struct ChainExit {
  bool next_chain = false;  // continue at the following chain's start
  StateIndex state = 0;     // absolute target state (start of next chain, or a terminal)
};

/// One ISIT mini-chain inside a concatenated tester.
struct ChainRecord {
  std::size_t index = 0;
  TestedQuantity quantity = TestedQuantity::bit;
  Symbol partner = 0;  // the i of a pair chain
  Watch watch;
  IsitParams isit;
  double budget = 0.0;        // per-chain error budget used to size N
  StateIndex offset = 0;      // absolute index of ISIT state 2
  bool ends_collapsed = true; // ends 1 and N are routed to exits instead of stored
  ChainExit low_exit;         // taken when ISIT state 1 is reached
  ChainExit high_exit;        // taken when ISIT state N is reached

  /// Absolute machine state of ISIT state `i` (2 <= i <= N-1).
  StateIndex state_of(std::size_t i) const { return offset + (i - 2); }
  StateIndex start_state() const { return state_of(isit.start); }
};

struct TesterLayout {
  std::string kind;  // "isit", "minichain", "paninski-pair"
  std::size_t n = 0;
  double eps = 0.0;
  double delta = 0.0;
  double tilde_eps = 0.0;
  std::vector<ChainRecord> chains;
  std::vector<StateIndex> terminals;  // absorbing exit states
  std::size_t total_states = 0;
  double size_bound = 0.0;  // closed-form state bound, when the construction has one
};

/// Checks that `m` implements `layout` exactly: every interior transition on a
/// watched symbol, self-loops elsewhere, absorbing terminals. Throws InputError.
void validate_layout(const Machine& m, const TesterLayout& layout);

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

struct IsitMachine {
  Machine machine;
  IsitParams params;
  TesterLayout layout;
};

/// Stand-alone N-state chain with states 1..N stored at indices 0..N-1.
IsitMachine build_isit(const IsitParams& params, const Watch& watch = Watch::bits(),
                       const IsitDecisions& decisions = {});
IsitMachine build_isit(std::size_t N, double p, double q, const Watch& watch = Watch::bits(),
                       const IsitDecisions& decisions = {});

/// Remembers the previous symbol (state 0: none yet, state 1 + x: last was x)
/// and emits a collision bit whenever the current symbol repeats it.
struct CollisionMachine {
  Machine machine;

  static constexpr StateIndex kEmpty = 0;
  static StateIndex state_of(Symbol x) { return x + 1; }

  /// Output for consuming `symbol` in `state`; empty from the start state.
  std::optional<bool> emits(StateIndex state, Symbol symbol) const;
  std::vector<std::optional<bool>> emitted_bits(std::span<const Symbol> stream) const;
};

CollisionMachine build_collision_machine(std::size_t n);

struct QuadraticTester {
  Machine machine;
  IsitParams isit;  // tests collision rate 1/n against (1 + eps^2)/n
  std::size_t n = 0;

  /// Product state for (collision state c, ISIT state k in 1..N).
  StateIndex state_of(StateIndex c, std::size_t k) const { return c * isit.N + (k - 1); }
};

/// Collision machine composed with an ISIT chain on its output bits:
/// (n + 1) * N states. Requires eps in (0,1), delta in (0,1/2) and
/// 1 + 2 eps^2 <= n so that the sizing range holds.
QuadraticTester build_quadratic_tester(std::size_t n, double eps, double delta);

struct MinichainTester {
  Machine machine;
  TesterLayout layout;
};

/// Linear-size uniformity tester: a marginal chain on symbol 1 followed by two
/// pair chains for every i = 2..n, ending in shared H0/H1 sinks.
MinichainTester build_minichain_tester(std::size_t n, double eps, double delta);

/// eps / (8 + 4 eps).
double tilde_epsilon(double eps);

/// Closed-form state bound 9n + (240 n / eps) ln(40 n / delta).
double minichain_size_bound(std::size_t n, double eps, double delta);

enum class PairSide { first, second };  // p_1^{(1,i)} or p_i^{(1,i)}

struct BiasedPair {
  Symbol partner;   // i (0-based)
  PairSide side;
  double bias;      // the conditional probability that exceeded 1/2 + tilde eps
};

/// Scans i = 2..n in tester order and returns the first pair conditional that
/// exceeds 1/2 + tilde_epsilon(eps). A pair with p_1 + p_i = 0 is reported
/// with bias 1 on the first side.
std::optional<BiasedPair> find_biased_pair(const DiscreteDistribution& p, double eps);

// ---------------------------------------------------------------------------
// Shared chain assembly
// ---------------------------------------------------------------------------

enum class ExitTarget { next, h0, h1 };

struct ChainSpec {
  TestedQuantity quantity;
  Symbol partner;
  Watch watch;
  IsitParams isit;
  double budget;
  ExitTarget on_low;
  ExitTarget on_high;
};

/// Concatenates chains with collapsed ends followed by an H0 sink and an H1
/// sink. The machine starts at the first chain's start state; every interior
/// state is labelled H0.
MinichainTester assemble_chains(std::string kind, std::size_t alphabet,
                                const std::vector<ChainSpec>& specs);

}  // namespace memtest
