#include "memtest/machine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memtest/errors.hpp"
#include "memtest/io.hpp"

namespace memtest {

SuccessorList normalize_successors(SuccessorList list, std::size_t num_states) {
  std::sort(list.begin(), list.end(),
            [](const Successor& a, const Successor& b) { return a.state < b.state; });
  SuccessorList out;
  out.reserve(list.size());
  double sum = 0.0;
  for (const auto& s : list) {
    if (s.state >= num_states) {
      throw InputError("successor state " + std::to_string(s.state + 1) + " outside [" +
                       std::to_string(num_states) + "]");
    }
    if (!std::isfinite(s.prob) || s.prob < 0.0) {
      throw InputError("negative or non-finite transition probability");
    }
    sum += s.prob;
    if (s.prob == 0.0) continue;
    if (!out.empty() && out.back().state == s.state) {
      out.back().prob += s.prob;
    } else {
      out.push_back(s);
    }
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw InputError("transition probabilities sum to " + std::to_string(sum));
  }
  return out;
}

Machine::Builder::Builder(std::size_t num_states, std::size_t alphabet) {
  if (num_states == 0) throw InputError("machine needs at least one state");
  if (alphabet == 0) throw InputError("machine needs a non-empty alphabet");
  m_.alphabet_ = alphabet;
  m_.rows_.resize(num_states);
  m_.decisions_.assign(num_states, Hypothesis::H0);
  for (StateIndex s = 0; s < num_states; ++s) m_.rows_[s].fallback = {{s, 1.0}};
}

Machine::Builder& Machine::Builder::init(StateIndex s) {
  if (s >= m_.rows_.size()) throw InputError("initial state out of range");
  m_.init_ = s;
  return *this;
}

Machine::Builder& Machine::Builder::decision(StateIndex s, Hypothesis h) {
  if (s >= m_.rows_.size()) throw InputError("decision for a state out of range");
  m_.decisions_[s] = h;
  return *this;
}

Machine::Builder& Machine::Builder::transition(StateIndex from, Symbol x, SuccessorList to) {
  if (from >= m_.rows_.size()) throw InputError("transition from a state out of range");
  if (x >= m_.alphabet_) throw InputError("transition on a symbol out of range");
  auto list = normalize_successors(std::move(to), m_.rows_.size());
  auto& row = m_.rows_[from];
  auto it = std::lower_bound(row.symbols.begin(), row.symbols.end(), x);
  const auto pos = static_cast<std::size_t>(it - row.symbols.begin());
  if (it != row.symbols.end() && *it == x) {
    row.targets[pos] = std::move(list);
  } else {
    row.symbols.insert(it, x);
    row.targets.insert(row.targets.begin() + static_cast<std::ptrdiff_t>(pos), std::move(list));
  }
  return *this;
}

Machine::Builder& Machine::Builder::fallback(StateIndex from, SuccessorList to) {
  if (from >= m_.rows_.size()) throw InputError("fallback for a state out of range");
  m_.rows_[from].fallback = normalize_successors(std::move(to), m_.rows_.size());
  return *this;
}

Machine Machine::Builder::build() && {
  bool deterministic = true;
  for (const auto& row : m_.rows_) {
    if (row.fallback.size() != 1) deterministic = false;
    for (const auto& t : row.targets) {
      if (t.size() != 1) deterministic = false;
    }
  }
  m_.deterministic_ = deterministic;
  return std::move(m_);
}

const SuccessorList& Machine::kernel(StateIndex s, Symbol x) const {
  if (s >= rows_.size()) throw InputError("state " + std::to_string(s + 1) + " out of range");
  if (x >= alphabet_) throw InputError("symbol " + std::to_string(x + 1) + " out of range");
  const auto& row = rows_[s];
  auto it = std::lower_bound(row.symbols.begin(), row.symbols.end(), x);
  if (it != row.symbols.end() && *it == x) {
    return row.targets[static_cast<std::size_t>(it - row.symbols.begin())];
  }
  return row.fallback;
}

bool Machine::is_absorbing(StateIndex s) const {
  const auto& row = rows_.at(s);
  const auto self = [s](const SuccessorList& l) { return l.size() == 1 && l[0].state == s; };
  if (row.symbols.size() < alphabet_ && !self(row.fallback)) return false;
  return std::all_of(row.targets.begin(), row.targets.end(), self);
}

StateIndex step(const Machine& m, StateIndex state, Symbol symbol, Rng& rng) {
  const auto& next = m.kernel(state, symbol);
  if (next.size() == 1) return next.front().state;
  const double u = rng.uniform01();
  double acc = 0.0;
  for (const auto& s : next) {
    acc += s.prob;
    if (u < acc) return s.state;
  }
  return next.back().state;
}

RunTrace run(const Machine& m, std::span<const Symbol> stream, Rng& rng) {
  RunTrace trace;
  trace.states.reserve(stream.size() + 1);
  trace.decisions.reserve(stream.size() + 1);
  StateIndex state = m.init();
  trace.states.push_back(state);
  trace.decisions.push_back(m.decision(state));
  if (m.is_absorbing(state)) trace.absorbed = Absorption{0, state};
  for (std::size_t t = 0; t < stream.size(); ++t) {
    state = step(m, state, stream[t], rng);
    trace.states.push_back(state);
    trace.decisions.push_back(m.decision(state));
    if (!trace.absorbed && m.is_absorbing(state)) trace.absorbed = Absorption{t + 1, state};
  }
  return trace;
}

std::string machine_hash(const Machine& m) {
  const std::string text = machine_to_json(m).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace memtest
