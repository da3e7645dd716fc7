#include "memtest/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>

#include "memtest/errors.hpp"
#include "state_reduction.hpp"

namespace memtest {
namespace {

using Triplet = Eigen::Triplet<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

TransitionMatrix::Sparse from_triplets(std::size_t n, const std::vector<Triplet>& triplets) {
  TransitionMatrix::Sparse m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

// Row-normalizes accumulated entries; used where rows are rebuilt from
// products that are stochastic only up to rounding.
TransitionMatrix normalized(std::size_t n, std::vector<Triplet> triplets) {
  std::vector<double> sums(n, 0.0);
  for (const auto& t : triplets) sums[static_cast<std::size_t>(t.row())] += t.value();
  for (auto& t : triplets) {
    t = Triplet(t.row(), t.col(), t.value() / sums[static_cast<std::size_t>(t.row())]);
  }
  return TransitionMatrix(from_triplets(n, triplets));
}

std::vector<bool> membership(std::size_t n, std::span<const StateIndex> set) {
  std::vector<bool> in(n, false);
  for (StateIndex s : set) {
    if (s >= n) throw InputError("state " + std::to_string(s + 1) + " out of range");
    in[s] = true;
  }
  return in;
}

double tv_rows(const Eigen::MatrixXd& M, const Eigen::VectorXd& pi) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    worst = std::max(worst, 0.5 * (M.row(i).transpose() - pi).cwiseAbs().sum());
  }
  return worst;
}

}  // namespace

TransitionMatrix::TransitionMatrix(Sparse matrix) : m_(std::move(matrix)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0) {
    throw InputError("transition matrix must be square and non-empty");
  }
  m_.makeCompressed();
  for (Eigen::Index i = 0; i < m_.rows(); ++i) {
    double sum = 0.0;
    for (Sparse::InnerIterator it(m_, i); it; ++it) {
      if (!std::isfinite(it.value()) || it.value() < 0.0) {
        throw InputError("transition matrix has a negative or non-finite entry");
      }
      sum += it.value();
    }
    if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
      throw InputError("row " + std::to_string(i + 1) + " of transition matrix sums to " +
                       std::to_string(sum));
    }
  }
  m_.prune(0.0);
}

TransitionMatrix TransitionMatrix::from_dense(const Eigen::MatrixXd& dense) {
  return TransitionMatrix(dense.sparseView(0.0, 0.0));
}

TransitionMatrix induced_matrix(const Machine& m, const DiscreteDistribution& p) {
  if (m.alphabet_size() != p.size()) {
    throw InputError("machine alphabet (" + std::to_string(m.alphabet_size()) +
                     ") differs from distribution size (" + std::to_string(p.size()) + ")");
  }
  const std::size_t S = m.num_states();
  std::vector<Triplet> triplets;
  triplets.reserve(S * 3);
  for (StateIndex s = 0; s < S; ++s) {
    const auto symbols = m.explicit_symbols(s);
    for (Symbol x : symbols) {
      if (p[x] == 0.0) continue;
      for (const auto& t : m.kernel(s, x)) {
        triplets.emplace_back(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t.state),
                              p[x] * t.prob);
      }
    }
    if (m.uses_fallback(s)) {
      double rest = 0.0;
      std::size_t k = 0;
      for (Symbol x = 0; x < p.size(); ++x) {
        if (k < symbols.size() && symbols[k] == x) {
          ++k;
          continue;
        }
        rest += p[x];
      }
      if (rest > 0.0) {
        for (const auto& t : m.fallback(s)) {
          triplets.emplace_back(static_cast<Eigen::Index>(s),
                                static_cast<Eigen::Index>(t.state), rest * t.prob);
        }
      }
    }
  }
  return TransitionMatrix(from_triplets(S, triplets));
}

Decomposition classify(const TransitionMatrix& P) {
  const auto& M = P.sparse();
  const std::size_t n = P.size();
  const auto* outer = M.outerIndexPtr();
  const auto* inner = M.innerIndexPtr();

  // Iterative Tarjan over the positive-entry graph.
  constexpr std::size_t kUnvisited = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> index(n, kUnvisited), low(n, 0), comp(n, kUnvisited);
  std::vector<char> on_stack(n, 0);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, Eigen::Index>> call;
  std::size_t counter = 0, num_comp = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != kUnvisited) continue;
    call.emplace_back(root, outer[root]);
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos < outer[v + 1]) {
        const auto w = static_cast<std::size_t>(inner[pos++]);
        if (index[w] == kUnvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = 1;
          call.emplace_back(w, outer[w]);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
      if (low[done] == index[done]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp[w] = num_comp;
        } while (w != done);
        ++num_comp;
      }
    }
  }

  std::vector<char> closed(num_comp, 1);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto pos = outer[v]; pos < outer[v + 1]; ++pos) {
      if (comp[static_cast<std::size_t>(inner[pos])] != comp[v]) closed[comp[v]] = 0;
    }
  }
  Decomposition dec;
  dec.class_of.assign(n, -1);
  std::vector<int> comp_to_class(num_comp, -1);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t c = comp[v];
    if (!closed[c]) {
      dec.transient.push_back(v);
      continue;
    }
    if (comp_to_class[c] < 0) {
      comp_to_class[c] = static_cast<int>(dec.classes.size());
      dec.classes.emplace_back();
    }
    dec.classes[static_cast<std::size_t>(comp_to_class[c])].push_back(v);
    dec.class_of[v] = comp_to_class[c];
  }
  return dec;
}

TransitionMatrix restrict_to_class(const TransitionMatrix& P, std::span<const StateIndex> cls) {
  std::unordered_map<StateIndex, std::size_t> local;
  for (std::size_t i = 0; i < cls.size(); ++i) local.emplace(cls[i], i);
  std::vector<Triplet> triplets;
  for (std::size_t i = 0; i < cls.size(); ++i) {
    P.for_each_in_row(cls[i], [&](StateIndex j, double w) {
      auto it = local.find(j);
      if (it == local.end()) throw InputError("state set is not closed under the chain");
      triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(it->second),
                            w);
    });
  }
  return TransitionMatrix(from_triplets(cls.size(), triplets));
}

std::vector<double> stationary(const TransitionMatrix& P, std::span<const StateIndex> cls) {
  if (cls.empty()) throw InputError("stationary: empty class");
  const TransitionMatrix R = restrict_to_class(P, cls);
  const std::size_t m = cls.size();
  if (m == 1) return {1.0};

  detail::ReductionGraph g(m, /*record_in_edges=*/true);
  for (std::size_t i = 0; i < m; ++i) R.for_each_in_row(i, [&](StateIndex j, double w) {
    g.add_edge(i, j, w);
  });
  std::vector<bool> keep(m, false);
  keep[m - 1] = true;
  g.eliminate(keep);
  std::vector<detail::ReductionGraph::Real> weight(m, 0.0);
  weight[m - 1] = 1.0;
  g.propagate_stationary(weight);
  const auto total = std::accumulate(weight.begin(), weight.end(), detail::ReductionGraph::Real{0});
  std::vector<double> pi(m);
  for (std::size_t i = 0; i < m; ++i) pi[i] = static_cast<double>(weight[i] / total);

  std::vector<double> next(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    R.for_each_in_row(i, [&](StateIndex j, double w) { next[j] += pi[i] * w; });
  }
  double residual = 0.0;
  for (std::size_t i = 0; i < m; ++i) residual += std::abs(next[i] - pi[i]);
  if (!(residual <= kStationaryTolerance)) {
    throw NumericalError("stationary solve missed its balance tolerance", residual);
  }
  return pi;
}

std::size_t class_period(const TransitionMatrix& P, std::span<const StateIndex> cls) {
  std::unordered_map<StateIndex, long long> level;
  std::vector<StateIndex> queue{cls.front()};
  level[cls.front()] = 0;
  long long g = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const StateIndex u = queue[head];
    P.for_each_in_row(u, [&](StateIndex v, double) {
      auto it = level.find(v);
      if (it == level.end()) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      } else {
        g = std::gcd(g, std::llabs(level[u] + 1 - it->second));
      }
    });
  }
  return g == 0 ? 1 : static_cast<std::size_t>(g);
}

std::vector<double> AbsorptionSolution::row(StateIndex s) const {
  return {probs.begin() + static_cast<std::ptrdiff_t>(s * num_classes),
          probs.begin() + static_cast<std::ptrdiff_t>((s + 1) * num_classes)};
}

AbsorptionSolution solve_absorption(const TransitionMatrix& P, const Decomposition& dec) {
  const std::size_t S = P.size();
  const std::size_t K = dec.classes.size();
  const std::size_t T = dec.transient.size();
  AbsorptionSolution sol;
  sol.num_states = S;
  sol.num_classes = K;
  sol.probs.assign(S * K, 0.0);
  sol.mean_time.assign(S, 0.0);
  for (StateIndex s = 0; s < S; ++s) {
    if (dec.class_of[s] >= 0) sol.probs[s * K + static_cast<std::size_t>(dec.class_of[s])] = 1.0;
  }
  if (T == 0) return sol;

  std::vector<std::size_t> node(S);
  for (std::size_t t = 0; t < T; ++t) node[dec.transient[t]] = t;
  for (StateIndex s = 0; s < S; ++s) {
    if (dec.class_of[s] >= 0) node[s] = T + static_cast<std::size_t>(dec.class_of[s]);
  }
  detail::ReductionGraph g(T + K);
  for (std::size_t t = 0; t < T; ++t) {
    P.for_each_in_row(dec.transient[t], [&](StateIndex j, double w) { g.add_edge(t, node[j], w); });
  }
  std::vector<bool> keep(T + K, false);
  std::fill(keep.begin() + static_cast<std::ptrdiff_t>(T), keep.end(), true);
  g.eliminate(keep);

  std::vector<detail::ReductionGraph::Real> h((T + K) * K, 0.0);
  for (std::size_t k = 0; k < K; ++k) h[(T + k) * K + k] = 1.0;
  g.propagate_harmonic(h, K);
  std::vector<detail::ReductionGraph::Real> times(T + K, 0.0);
  g.propagate_times(times);

  for (std::size_t t = 0; t < T; ++t) {
    const StateIndex s = dec.transient[t];
    for (std::size_t k = 0; k < K; ++k) sol.probs[s * K + k] = static_cast<double>(h[t * K + k]);
    sol.mean_time[s] = static_cast<double>(times[t]);
  }
  for (StateIndex s : dec.transient) {
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += sol.probs[s * K + k];
    sol.row_sum_residual = std::max(sol.row_sum_residual, std::abs(sum - 1.0));
    std::vector<double> step(K, 0.0);
    P.for_each_in_row(s, [&](StateIndex j, double w) {
      for (std::size_t k = 0; k < K; ++k) step[k] += w * sol.probs[j * K + k];
    });
    for (std::size_t k = 0; k < K; ++k) {
      sol.balance_residual = std::max(sol.balance_residual, std::abs(step[k] - sol.probs[s * K + k]));
    }
  }
  if (!(sol.row_sum_residual <= kAbsorptionTolerance)) {
    throw NumericalError("absorption probabilities do not sum to one", sol.row_sum_residual);
  }
  return sol;
}

std::vector<double> absorption(const TransitionMatrix& P, const Decomposition& dec,
                               StateIndex from) {
  if (from >= P.size()) throw InputError("absorption: start state out of range");
  return solve_absorption(P, dec).row(from);
}

ChainAnalysis analyze(const TransitionMatrix& P, StateIndex init) {
  if (init >= P.size()) throw InputError("analyze: initial state out of range");
  ChainAnalysis a;
  a.init = init;
  a.decomposition = classify(P);
  const auto sol = solve_absorption(P, a.decomposition);
  a.absorption = sol.row(init);
  a.mean_absorption_time = sol.mean_time[init];
  a.absorption_residual = std::max(sol.row_sum_residual, sol.balance_residual);
  a.cesaro.assign(P.size(), 0.0);
  for (std::size_t k = 0; k < a.decomposition.classes.size(); ++k) {
    const auto& cls = a.decomposition.classes[k];
    a.stationary.push_back(stationary(P, cls));
    const auto& pi = a.stationary.back();
    std::vector<double> next(cls.size(), 0.0);
    std::unordered_map<StateIndex, std::size_t> local;
    for (std::size_t i = 0; i < cls.size(); ++i) local.emplace(cls[i], i);
    for (std::size_t i = 0; i < cls.size(); ++i) {
      P.for_each_in_row(cls[i], [&](StateIndex j, double w) { next[local.at(j)] += pi[i] * w; });
      a.cesaro[cls[i]] += a.absorption[k] * pi[i];
    }
    double residual = 0.0;
    for (std::size_t i = 0; i < cls.size(); ++i) residual += std::abs(next[i] - pi[i]);
    a.stationary_residual = std::max(a.stationary_residual, residual);
  }
  return a;
}

ChainAnalysis analyze(const Machine& m, const DiscreteDistribution& p) {
  return analyze(induced_matrix(m, p), m.init());
}

double error_probability(const ChainAnalysis& a, std::span<const Hypothesis> decisions,
                         Hypothesis truth) {
  if (decisions.size() != a.cesaro.size()) throw InputError("decision map size mismatch");
  double err = 0.0;
  for (std::size_t s = 0; s < decisions.size(); ++s) {
    if (decisions[s] != truth) err += a.cesaro[s];
  }
  return std::clamp(err, 0.0, 1.0);
}

double error_probability(const Machine& m, const DiscreteDistribution& p, Hypothesis truth) {
  return error_probability(analyze(m, p), m.decisions(), truth);
}

std::vector<double> expected_hitting_times(const TransitionMatrix& P,
                                           std::span<const StateIndex> targets,
                                           std::optional<std::span<const StateIndex>> absorbed_in) {
  const std::size_t S = P.size();
  if (targets.empty()) throw InputError("expected_hitting_times: empty target set");
  const auto is_target = membership(S, targets);

  if (absorbed_in) {
    const auto dec = classify(P);
    const StateIndex probe = absorbed_in->front();
    if (probe >= S || dec.class_of[probe] < 0) {
      throw InputError("conditioning set is not a recurrent class");
    }
    const auto k = static_cast<std::size_t>(dec.class_of[probe]);
    if (dec.classes[k].size() != absorbed_in->size()) {
      throw InputError("conditioning set is not a whole recurrent class");
    }
    const auto sol = solve_absorption(P, dec);
    std::vector<Triplet> triplets;
    for (StateIndex i = 0; i < S; ++i) {
      const double hi = sol.at(i, k);
      if (hi <= 0.0) {
        triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), 1.0);
        continue;
      }
      P.for_each_in_row(i, [&](StateIndex j, double w) {
        const double hj = sol.at(j, k);
        if (hj > 0.0) {
          triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j),
                                w * hj / hi);
        }
      });
    }
    const TransitionMatrix conditioned = normalized(S, std::move(triplets));
    auto times = expected_hitting_times(conditioned, targets);
    for (StateIndex i = 0; i < S; ++i) {
      if (sol.at(i, k) <= 0.0) times[i] = kInf;
    }
    return times;
  }

  std::vector<Triplet> triplets;
  for (StateIndex i = 0; i < S; ++i) {
    if (is_target[i]) {
      triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), 1.0);
    } else {
      P.for_each_in_row(i, [&](StateIndex j, double w) {
        triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), w);
      });
    }
  }
  const TransitionMatrix stopped(from_triplets(S, triplets));
  const auto dec = classify(stopped);
  const auto sol = solve_absorption(stopped, dec);
  std::vector<double> times(S, 0.0);
  for (StateIndex i = 0; i < S; ++i) {
    if (is_target[i]) continue;
    double reach = 0.0;
    for (std::size_t k = 0; k < dec.classes.size(); ++k) {
      if (is_target[dec.classes[k].front()]) reach += sol.at(i, k);
    }
    times[i] = reach >= 1.0 - kAbsorptionTolerance ? sol.mean_time[i] : kInf;
  }
  return times;
}

std::size_t mixing_time(const TransitionMatrix& P) {
  const auto dec = classify(P);
  if (!dec.irreducible()) throw InputError("mixing_time needs an irreducible chain");
  if (class_period(P, dec.classes.front()) != 1) {
    throw InputError("mixing_time needs an aperiodic chain; lazify it with (P + I) / 2");
  }
  const auto pi_vec = stationary(P, dec.classes.front());
  const Eigen::VectorXd pi = Eigen::Map<const Eigen::VectorXd>(pi_vec.data(),
                                                               static_cast<Eigen::Index>(pi_vec.size()));
  constexpr double kThreshold = 0.25;
  std::vector<Eigen::MatrixXd> powers{P.dense()};  // powers[j] = P^(2^j)
  if (tv_rows(powers[0], pi) <= kThreshold) return 1;
  while (tv_rows(powers.back(), pi) > kThreshold) {
    if (powers.size() > 60) throw NumericalError("mixing_time: no convergence by 2^60 steps");
    powers.push_back(powers.back() * powers.back());
  }
  std::size_t lo = std::size_t{1} << (powers.size() - 2);
  std::size_t hi = std::size_t{1} << (powers.size() - 1);
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(pi.size(), pi.size());
    for (std::size_t j = 0; j < powers.size(); ++j) {
      if ((mid >> j) & 1U) acc = acc * powers[j];
    }
    if (tv_rows(acc, pi) <= kThreshold) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double ErgodicizedChain::class_mass_error() const {
  double worst = 0.0;
  for (std::size_t k = 0; k < class_mass.size(); ++k) {
    worst = std::max(worst, std::abs(class_mass[k] - absorption[k]));
  }
  return worst;
}

bool ErgodicizedChain::class_mass_bound_holds() const {
  return class_mass_error() <= 1.0 / (slack + 1.0);
}

double ErgodicizedChain::within_class_margin() const {
  double margin = kInf;
  for (std::size_t k = 0; k < class_mass.size(); ++k) {
    if (class_mass[k] <= 0.0) continue;
    const auto& cls = base_decomposition.classes[k];
    const double bound_shift =
        static_cast<double>(cls.size()) / slack * (1.0 + 1.0 / class_mass[k]);
    for (std::size_t i = 0; i < cls.size(); ++i) {
      const double conditional = stationary[cls[i]] / class_mass[k];
      margin = std::min(margin, conditional - (base_stationary[k][i] - bound_shift));
    }
  }
  return margin;
}

ErgodicizedChain ergodicize(const TransitionMatrix& P, StateIndex init, double slack) {
  if (!(slack > 0.0)) throw ParameterError("slack factor M must be positive");
  if (init >= P.size()) throw InputError("ergodicize: initial state out of range");
  ErgodicizedChain e{.base = P, .result = P};
  e.init = init;
  e.slack = slack;
  e.base_decomposition = classify(P);
  const auto& dec = e.base_decomposition;
  for (const auto& cls : dec.classes) e.base_stationary.push_back(stationary(P, cls));

  auto fill_unchanged = [&](std::string notice) {
    e.notice = std::move(notice);
    e.absorption.assign(dec.classes.size(), 0.0);
    e.class_mass.assign(dec.classes.size(), 0.0);
    e.stationary.assign(P.size(), 0.0);
    const auto k = static_cast<std::size_t>(dec.class_of[init]);
    e.absorption[k] = 1.0;
    e.class_mass[k] = 1.0;
    for (std::size_t i = 0; i < dec.classes[k].size(); ++i) {
      e.stationary[dec.classes[k][i]] = e.base_stationary[k][i];
    }
    return e;
  };
  if (dec.irreducible()) return fill_unchanged("chain is already irreducible; nothing to connect");
  if (dec.class_of[init] >= 0) {
    return fill_unchanged("initial state is recurrent; the chain seen from it is irreducible");
  }

  const auto sol = solve_absorption(P, dec);
  e.absorption = sol.row(init);
  double bound = 0.0;
  for (std::size_t k = 0; k < dec.classes.size(); ++k) {
    if (e.absorption[k] <= 0.0) continue;
    const auto& cls = dec.classes[k];
    const double hit = expected_hitting_times(P, cls, std::span<const StateIndex>(cls))[init];
    double mix = 1.0;
    if (cls.size() > 1) {
      const auto R = restrict_to_class(P, cls);
      if (class_period(P, cls) == 1) {
        mix = static_cast<double>(mixing_time(R));
      } else {
        const Eigen::MatrixXd lazy =
            0.5 * (R.dense() + Eigen::MatrixXd::Identity(R.dense().rows(), R.dense().cols()));
        mix = 2.0 * static_cast<double>(mixing_time(TransitionMatrix::from_dense(lazy)));
      }
    }
    bound = std::max(bound, hit + mix);
  }
  e.mixing_bound = bound;
  e.connect_prob = 1.0 / (slack * bound);
  if (!(e.connect_prob < 1.0)) throw ParameterError("slack factor too small: connection probability >= 1");

  std::vector<Triplet> triplets;
  for (StateIndex i = 0; i < P.size(); ++i) {
    const bool recurrent = dec.class_of[i] >= 0;
    const double keep = recurrent ? 1.0 - e.connect_prob : 1.0;
    P.for_each_in_row(i, [&](StateIndex j, double w) {
      triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), keep * w);
    });
    if (recurrent) {
      triplets.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(init),
                            e.connect_prob);
    }
  }
  e.result = normalized(P.size(), std::move(triplets));
  e.changed = true;

  const auto new_dec = classify(e.result);
  const int home = new_dec.class_of[init];
  if (home < 0) throw NumericalError("ergodicized chain: initial state is not recurrent");
  const auto& cls = new_dec.classes[static_cast<std::size_t>(home)];
  const auto pi = stationary(e.result, cls);
  e.stationary.assign(P.size(), 0.0);
  for (std::size_t i = 0; i < cls.size(); ++i) e.stationary[cls[i]] = pi[i];
  e.class_mass.assign(dec.classes.size(), 0.0);
  for (std::size_t k = 0; k < dec.classes.size(); ++k) {
    for (StateIndex s : dec.classes[k]) e.class_mass[k] += e.stationary[s];
  }
  return e;
}

ErgodicizedChain ergodicize(const Machine& m, const DiscreteDistribution& p, double slack) {
  return ergodicize(induced_matrix(m, p), m.init(), slack);
}

double kac_check(const TransitionMatrix& P) {
  const auto dec = classify(P);
  if (!dec.irreducible()) throw InputError("kac_check needs an irreducible chain");
  const std::size_t S = P.size();
  const auto pi = stationary(P, dec.classes.front());
  if (S == 1) return std::abs(pi[0] * 1.0 - 1.0);
  const Eigen::MatrixXd D = P.dense();
  double worst = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    // First-passage times to i from every other state: (I - P) restricted to
    // the complement of i, right-hand side all ones.
    std::vector<Eigen::Index> rest;
    for (std::size_t j = 0; j < S; ++j) {
      if (j != i) rest.push_back(static_cast<Eigen::Index>(j));
    }
    const auto m = static_cast<Eigen::Index>(rest.size());
    Eigen::MatrixXd A(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) A(a, b) = (a == b ? 1.0 : 0.0) - D(rest[a], rest[b]);
    }
    const Eigen::VectorXd T = A.partialPivLu().solve(Eigen::VectorXd::Ones(m));
    double ret = 1.0;
    for (Eigen::Index a = 0; a < m; ++a) ret += D(static_cast<Eigen::Index>(i), rest[a]) * T(a);
    worst = std::max(worst, std::abs(pi[i] * ret - 1.0));
  }
  return worst;
}

double flow_balance_check(const TransitionMatrix& P, std::span<const StateIndex> cut) {
  const auto dec = classify(P);
  if (!dec.irreducible()) throw InputError("flow_balance_check needs an irreducible chain");
  const auto pi = stationary(P, dec.classes.front());
  const auto in_cut = membership(P.size(), cut);
  double forward = 0.0, backward = 0.0;
  for (StateIndex i = 0; i < P.size(); ++i) {
    P.for_each_in_row(i, [&](StateIndex j, double w) {
      if (in_cut[i] && !in_cut[j]) forward += pi[i] * w;
      if (!in_cut[i] && in_cut[j]) backward += pi[i] * w;
    });
  }
  return std::abs(forward - backward);
}

}  // namespace memtest
