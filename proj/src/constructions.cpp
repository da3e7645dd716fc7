#include "memtest/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "memtest/errors.hpp"

namespace memtest {
namespace {

constexpr double kRangeSlack = 1e-12;
constexpr std::size_t kMaxStates = 50'000'000;

void require_probability(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) {
    throw ParameterError(std::string(name) + " must lie in (0,1), got " + std::to_string(v));
  }
}

void require_eps_delta(double eps, double delta) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0,1)");
  if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("delta must lie in (0,1/2)");
}

std::vector<Symbol> complement(std::size_t alphabet, const std::vector<Symbol>& taken) {
  std::vector<Symbol> out;
  for (Symbol x = 0; x < alphabet; ++x) {
    if (std::find(taken.begin(), taken.end(), x) == taken.end()) out.push_back(x);
  }
  return out;
}

// Translates an ISIT state 1..N of `chain` into an absolute machine state.
StateIndex chain_target(const ChainRecord& chain, std::size_t i) {
  if (i == chain.isit.N) return chain.high_exit.state;
  if (i == 1) return chain.low_exit.state;
  return chain.state_of(i);
}

void wire_chain(Machine::Builder& b, const ChainRecord& chain) {
  const auto& w = chain.watch;
  const bool covers_all = w.ones.size() + w.zeros.size() == w.alphabet;
  for (std::size_t i = 2; i < chain.isit.N; ++i) {
    const StateIndex from = chain.state_of(i);
    const StateIndex up = chain_target(chain, isit_next(chain.isit, i, true));
    const StateIndex down = chain_target(chain, isit_next(chain.isit, i, false));
    for (Symbol x : w.ones) b.transition(from, x, up);
    if (covers_all && w.zeros.size() > 1) {
      b.fallback(from, down);
    } else {
      for (Symbol x : w.zeros) b.transition(from, x, down);
    }
  }
}

}  // namespace

std::size_t isit_start_state(std::size_t N, double p, double q) {
  if (N < 4) throw ParameterError("ISIT needs N >= 4, got " + std::to_string(N));
  require_probability(p, "p");
  require_probability(q, "q");
  if (!(q < p)) throw ParameterError("ISIT needs q < p");
  const double ratio = std::log(p * q) / (std::log(p * (1.0 - p)) + std::log(q * (1.0 - q)));
  const double offset = std::floor(ratio * static_cast<double>(N - 3) + 0.5);
  const double s = std::clamp(2.0 + offset, 2.0, static_cast<double>(N - 1));
  return static_cast<std::size_t>(s);
}

IsitParams make_isit_params(std::size_t N, double p, double q) {
  return IsitParams{N, p, q, isit_start_state(N, p, q)};
}

std::size_t isit_size(double delta, double p, double K, SizingRange range) {
  if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("delta must lie in (0,1/2)");
  if (!(K >= 2.0)) throw ParameterError("K must be at least 2");
  const double gap = 1.0 / K;
  if (range == SizingRange::strict) {
    if (p < 2.0 * gap - kRangeSlack || p > 1.0 - gap + kRangeSlack) {
      throw ParameterError("p = " + std::to_string(p) + " outside [2/K, 1-1/K] for K = " +
                           std::to_string(K));
    }
  } else if (!(p > gap && p < 1.0)) {
    throw ParameterError("p must lie in (1/K, 1)");
  }
  const double arg = 2.0 / (delta * (p - gap) * (1.0 - p));
  const double body = std::ceil(K * 6.0 * std::log(arg));
  if (!(body < static_cast<double>(kMaxStates))) throw ParameterError("ISIT size overflow");
  return 3 + static_cast<std::size_t>(body);
}

Watch Watch::bits() { return Watch{2, {1}, {0}}; }

Watch Watch::marginal(std::size_t alphabet, Symbol symbol) {
  if (symbol >= alphabet) throw InputError("watched symbol out of range");
  return Watch{alphabet, {symbol}, complement(alphabet, {symbol})};
}

Watch Watch::pair(std::size_t alphabet, Symbol zero, Symbol one) {
  if (zero >= alphabet || one >= alphabet || zero == one) {
    throw InputError("watched pair must be two distinct symbols of the alphabet");
  }
  return Watch{alphabet, {one}, {zero}};
}

double Watch::watched_mass(const DiscreteDistribution& p) const {
  double m = 0.0;
  for (Symbol x : ones) m += p[x];
  for (Symbol x : zeros) m += p[x];
  return m;
}

double Watch::one_probability(const DiscreteDistribution& p) const {
  double one = 0.0, zero = 0.0;
  for (Symbol x : ones) one += p[x];
  for (Symbol x : zeros) zero += p[x];
  return one / (one + zero);
}

std::size_t isit_next(const IsitParams& params, std::size_t i, bool bit) {
  if (i <= 1 || i >= params.N) return i;
  const std::size_t s = params.start;
  if (bit) return i > s ? i + 1 : s + 1;
  return i < s ? i - 1 : s - 1;
}

IsitMachine build_isit(const IsitParams& params, const Watch& watch,
                       const IsitDecisions& decisions) {
  if (params.N < 4) throw ParameterError("ISIT needs N >= 4");
  if (params.start < 2 || params.start > params.N - 1) {
    throw ParameterError("ISIT start state outside [2, N-1]");
  }
  ChainRecord chain;
  chain.quantity = watch.alphabet == 2 && watch.ones == std::vector<Symbol>{1} &&
                           watch.zeros == std::vector<Symbol>{0}
                       ? TestedQuantity::bit
                       : TestedQuantity::marginal;
  chain.watch = watch;
  chain.isit = params;
  chain.offset = 1;
  chain.ends_collapsed = false;
  chain.low_exit = ChainExit{false, 0};
  chain.high_exit = ChainExit{false, params.N - 1};

  Machine::Builder b(params.N, watch.alphabet);
  b.init(params.start - 1);
  b.decision(0, decisions.low_end);
  b.decision(params.N - 1, decisions.high_end);
  for (std::size_t i = 2; i < params.N; ++i) b.decision(i - 1, decisions.interior);
  wire_chain(b, chain);

  TesterLayout layout;
  layout.kind = "isit";
  layout.n = watch.alphabet;
  layout.chains.push_back(chain);
  layout.terminals = {0, params.N - 1};
  layout.total_states = params.N;
  return IsitMachine{std::move(b).build(), params, std::move(layout)};
}

IsitMachine build_isit(std::size_t N, double p, double q, const Watch& watch,
                       const IsitDecisions& decisions) {
  return build_isit(make_isit_params(N, p, q), watch, decisions);
}

void validate_layout(const Machine& m, const TesterLayout& layout) {
  if (layout.total_states != m.num_states()) {
    throw InputError("layout state count does not match the machine");
  }
  if (layout.chains.empty()) throw InputError("layout has no chains");
  if (m.init() != layout.chains.front().start_state()) {
    throw InputError("machine does not start at the first chain's start state");
  }
  for (StateIndex t : layout.terminals) {
    if (t >= m.num_states() || !m.is_absorbing(t)) {
      throw InputError("layout terminal " + std::to_string(t + 1) + " is not absorbing");
    }
  }
  for (std::size_t c = 0; c < layout.chains.size(); ++c) {
    const auto& chain = layout.chains[c];
    if (chain.watch.alphabet != m.alphabet_size()) throw InputError("chain alphabet mismatch");
    for (const ChainExit* e : {&chain.low_exit, &chain.high_exit}) {
      if (e->next_chain) {
        if (c + 1 >= layout.chains.size() || e->state != layout.chains[c + 1].start_state()) {
          throw InputError("chain exit does not lead to the next chain's start");
        }
      } else if (std::find(layout.terminals.begin(), layout.terminals.end(), e->state) ==
                 layout.terminals.end()) {
        throw InputError("chain exit leads to a non-terminal state");
      }
    }
    std::vector<int> role(m.alphabet_size(), 0);
    for (Symbol x : chain.watch.ones) role[x] = 1;
    for (Symbol x : chain.watch.zeros) role[x] = -1;
    for (std::size_t i = 2; i < chain.isit.N; ++i) {
      const StateIndex s = chain.state_of(i);
      if (s >= m.num_states()) throw InputError("chain state outside the machine");
      for (Symbol x = 0; x < m.alphabet_size(); ++x) {
        StateIndex want = s;
        if (role[x] == 1) want = chain_target(chain, isit_next(chain.isit, i, true));
        if (role[x] == -1) want = chain_target(chain, isit_next(chain.isit, i, false));
        const auto& got = m.kernel(s, x);
        if (got.size() != 1 || got[0].state != want) {
          throw InputError("machine transition from state " + std::to_string(s + 1) +
                           " on symbol " + std::to_string(x + 1) + " disagrees with layout");
        }
      }
    }
  }
}

MinichainTester assemble_chains(std::string kind, std::size_t alphabet,
                                const std::vector<ChainSpec>& specs) {
  if (specs.empty()) throw ParameterError("no chains to assemble");
  std::size_t total = 2;
  for (const auto& s : specs) {
    if (s.isit.N < 4) throw ParameterError("chain with fewer than 4 states");
    total += s.isit.N - 2;
    if (total > kMaxStates) throw ParameterError("tester exceeds the state-count guard");
  }
  const StateIndex h0 = total - 2;
  const StateIndex h1 = total - 1;

  TesterLayout layout;
  layout.kind = std::move(kind);
  layout.n = alphabet;
  layout.terminals = {h0, h1};
  layout.total_states = total;
  StateIndex offset = 0;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    ChainRecord rec;
    rec.index = j;
    rec.quantity = specs[j].quantity;
    rec.partner = specs[j].partner;
    rec.watch = specs[j].watch;
    rec.isit = specs[j].isit;
    rec.budget = specs[j].budget;
    rec.offset = offset;
    offset += rec.isit.N - 2;
    layout.chains.push_back(std::move(rec));
  }
  auto resolve = [&](std::size_t j, ExitTarget t) -> ChainExit {
    switch (t) {
      case ExitTarget::h0: return {false, h0};
      case ExitTarget::h1: return {false, h1};
      case ExitTarget::next:
        if (j + 1 >= layout.chains.size()) throw ParameterError("last chain cannot exit to next");
        return {true, layout.chains[j + 1].start_state()};
    }
    return {};
  };
  for (std::size_t j = 0; j < specs.size(); ++j) {
    layout.chains[j].low_exit = resolve(j, specs[j].on_low);
    layout.chains[j].high_exit = resolve(j, specs[j].on_high);
  }

  Machine::Builder b(total, alphabet);
  b.init(layout.chains.front().start_state());
  b.decision(h0, Hypothesis::H0);
  b.decision(h1, Hypothesis::H1);
  for (const auto& chain : layout.chains) wire_chain(b, chain);
  return MinichainTester{std::move(b).build(), std::move(layout)};
}

double tilde_epsilon(double eps) { return eps / (8.0 + 4.0 * eps); }

double minichain_size_bound(std::size_t n, double eps, double delta) {
  const double nd = static_cast<double>(n);
  return 9.0 * nd + (240.0 * nd / eps) * std::log(40.0 * nd / delta);
}

MinichainTester build_minichain_tester(std::size_t n, double eps, double delta) {
  if (n < 2) throw ParameterError("tester needs n >= 2");
  require_eps_delta(eps, delta);
  const double nd = static_cast<double>(n);
  const double te = tilde_epsilon(eps);

  std::vector<ChainSpec> specs;
  {
    const double p = 1.0 / (2.0 * nd);
    const double q = 1.0 / (4.0 * nd);
    const std::size_t N = isit_size(delta / 2.0, p, 4.0 * nd);
    specs.push_back(ChainSpec{TestedQuantity::marginal, 0, Watch::marginal(n, 0),
                              make_isit_params(N, p, q), delta / 2.0, ExitTarget::h1,
                              ExitTarget::next});
  }
  const double budget = (delta / 2.0) / (2.0 * nd);
  const double p = 0.5 + te;
  const double q = 0.5 + te / 2.0;
  const IsitParams pair = make_isit_params(isit_size(budget, p, 2.0 / te), p, q);
  for (Symbol i = 1; i < n; ++i) {
    specs.push_back(ChainSpec{TestedQuantity::pair_first, i, Watch::pair(n, i, 0), pair, budget,
                              ExitTarget::next, ExitTarget::h1});
    specs.push_back(ChainSpec{TestedQuantity::pair_second, i, Watch::pair(n, 0, i), pair, budget,
                              ExitTarget::next, ExitTarget::h1});
  }
  specs.back().on_low = ExitTarget::h0;

  auto tester = assemble_chains("minichain", n, specs);
  tester.layout.eps = eps;
  tester.layout.delta = delta;
  tester.layout.tilde_eps = te;
  tester.layout.size_bound = minichain_size_bound(n, eps, delta);
  return tester;
}

std::optional<bool> CollisionMachine::emits(StateIndex state, Symbol symbol) const {
  if (state >= machine.num_states()) throw InputError("collision machine state out of range");
  if (symbol >= machine.alphabet_size()) throw InputError("symbol out of range");
  if (state == kEmpty) return std::nullopt;
  return state == state_of(symbol);
}

std::vector<std::optional<bool>> CollisionMachine::emitted_bits(
    std::span<const Symbol> stream) const {
  std::vector<std::optional<bool>> out;
  out.reserve(stream.size());
  StateIndex state = machine.init();
  for (Symbol x : stream) {
    out.push_back(emits(state, x));
    state = state_of(x);
  }
  return out;
}

CollisionMachine build_collision_machine(std::size_t n) {
  if (n < 2) throw ParameterError("collision machine needs n >= 2");
  Machine::Builder b(n + 1, n);
  b.init(CollisionMachine::kEmpty);
  for (StateIndex s = 0; s <= n; ++s) {
    for (Symbol x = 0; x < n; ++x) b.transition(s, x, CollisionMachine::state_of(x));
  }
  return CollisionMachine{std::move(b).build()};
}

QuadraticTester build_quadratic_tester(std::size_t n, double eps, double delta) {
  if (n < 2) throw ParameterError("quadratic tester needs n >= 2");
  require_eps_delta(eps, delta);
  const double nd = static_cast<double>(n);
  const double K = nd / (eps * eps);
  const double p = (1.0 + eps * eps) / nd;
  const double q = 1.0 / nd;
  const std::size_t N = isit_size(delta, p, K);
  if ((n + 1) * N > kMaxStates) throw ParameterError("quadratic tester exceeds the state guard");

  QuadraticTester t{Machine::Builder(1, 1).build(), make_isit_params(N, p, q), n};
  Machine::Builder b((n + 1) * N, n);
  b.init(t.state_of(CollisionMachine::kEmpty, t.isit.start));
  for (StateIndex c = 0; c <= n; ++c) {
    b.decision(t.state_of(c, 1), Hypothesis::H0);
    b.decision(t.state_of(c, N), Hypothesis::H1);
    for (std::size_t k = 2; k < N; ++k) {
      const StateIndex from = t.state_of(c, k);
      for (Symbol x = 0; x < n; ++x) {
        const StateIndex next_c = CollisionMachine::state_of(x);
        std::size_t next_k = k;
        if (c != CollisionMachine::kEmpty) next_k = isit_next(t.isit, k, c == next_c);
        b.transition(from, x, t.state_of(next_c, next_k));
      }
    }
  }
  t.machine = std::move(b).build();
  return t;
}

std::optional<BiasedPair> find_biased_pair(const DiscreteDistribution& p, double eps) {
  const double threshold = 0.5 + tilde_epsilon(eps);
  for (Symbol i = 1; i < p.size(); ++i) {
    const double mass = p[0] + p[i];
    if (mass <= 0.0) return BiasedPair{i, PairSide::first, 1.0};
    const double first = p[0] / mass;
    if (first > threshold) return BiasedPair{i, PairSide::first, first};
    const double second = p[i] / mass;
    if (second > threshold) return BiasedPair{i, PairSide::second, second};
  }
  return std::nullopt;
}

}  // namespace memtest
