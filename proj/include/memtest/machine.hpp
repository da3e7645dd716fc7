#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memtest/distribution.hpp"
#include "memtest/rng.hpp"

namespace memtest {

enum class Hypothesis : std::uint8_t { H0 = 0, H1 = 1 };

inline Hypothesis opposite(Hypothesis h) noexcept {
  return h == Hypothesis::H0 ? Hypothesis::H1 : Hypothesis::H0;
}

struct Successor {
  StateIndex state;
  double prob;
  bool operator==(const Successor&) const = default;
};

/// Distribution over next states; sorted by state, no duplicates.
using SuccessorList = std::vector<Successor>;

/// Time-invariant (possibly randomized) finite-state machine over the
/// alphabet [n] with a hypothesis label on every state.
///
/// The kernel is stored per state as a sorted table of explicit symbols plus a
/// fallback list for all symbols not in the table. The fallback defaults to a
/// self-loop, which keeps testers that only react to one or two symbols per
/// state at O(S) storage. Machines are immutable once built.
class Machine {
 public:
  class Builder;

  std::size_t num_states() const noexcept { return rows_.size(); }
  std::size_t alphabet_size() const noexcept { return alphabet_; }
  StateIndex init() const noexcept { return init_; }
  Hypothesis decision(StateIndex s) const { return decisions_.at(s); }
  std::span<const Hypothesis> decisions() const noexcept { return decisions_; }

  /// Next-state distribution for (state, symbol). Throws InputError when
  /// either index is out of range.
  const SuccessorList& kernel(StateIndex s, Symbol x) const;

  /// Symbols with an explicit entry in the row of `s`.
  std::span<const Symbol> explicit_symbols(StateIndex s) const { return rows_.at(s).symbols; }
  const SuccessorList& fallback(StateIndex s) const { return rows_.at(s).fallback; }
  /// True when some symbol of the alphabet is routed through the fallback.
  bool uses_fallback(StateIndex s) const { return rows_.at(s).symbols.size() < alphabet_; }

  bool is_deterministic() const noexcept { return deterministic_; }
  /// kernel(s, x) is the point mass on s for every symbol x.
  bool is_absorbing(StateIndex s) const;

 private:
  struct Row {
    std::vector<Symbol> symbols;
    std::vector<SuccessorList> targets;
    SuccessorList fallback;
  };

  Machine() = default;

  std::size_t alphabet_ = 0;
  StateIndex init_ = 0;
  std::vector<Row> rows_;
  std::vector<Hypothesis> decisions_;
  bool deterministic_ = true;
};

class Machine::Builder {
 public:
  /// All states start with a self-loop fallback and decision H0.
  Builder(std::size_t num_states, std::size_t alphabet);

  Builder& init(StateIndex s);
  Builder& decision(StateIndex s, Hypothesis h);
  Builder& transition(StateIndex from, Symbol x, SuccessorList to);
  Builder& transition(StateIndex from, Symbol x, StateIndex to) {
    return transition(from, x, SuccessorList{{to, 1.0}});
  }
  /// Distribution used for every symbol of `from` without an explicit entry.
  Builder& fallback(StateIndex from, SuccessorList to);
  Builder& fallback(StateIndex from, StateIndex to) {
    return fallback(from, SuccessorList{{to, 1.0}});
  }

  /// Validates every row and freezes the machine. Throws InputError.
  Machine build() &&;

 private:
  Machine m_;
};

/// Canonicalizes a successor list: merges duplicate states, drops zero
/// entries, sorts by state, and checks that it is a distribution over [S].
SuccessorList normalize_successors(SuccessorList list, std::size_t num_states);

/// One transition of the machine. Deterministic rows ignore `rng`.
StateIndex step(const Machine& m, StateIndex state, Symbol symbol, Rng& rng);

struct Absorption {
  std::size_t step;   // number of symbols consumed when the state was entered
  StateIndex state;   // the absorbing state
};

struct RunTrace {
  std::vector<StateIndex> states;       // states[0] = init, one entry per symbol after
  std::vector<Hypothesis> decisions;    // decision of each visited state
  std::optional<Absorption> absorbed;
};

RunTrace run(const Machine& m, std::span<const Symbol> stream, Rng& rng);

/// Stable 64-bit FNV-1a digest of the canonical serialization, as 16 hex digits.
std::string machine_hash(const Machine& m);

}  // namespace memtest
