#pragma once

#include <cstddef>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace memtest::detail {

/// Sparse state-reduction (GTH-style) elimination on the jump graph of a
/// Markov chain. Self-loops are never stored: eliminating state k folds each
/// path i -> k -> j into the edge i -> j, and a node's exit mass is always the
/// sum of its stored out-weights. Every update adds non-negative terms, so
/// absorption probabilities, expected times and stationary weights keep full
/// relative accuracy even when they span hundreds of orders of magnitude.
/// Weights are kept in extended precision: escape probabilities of long
/// chains fall below the double range long before the answers do.
class ReductionGraph {
 public:
  using Real = long double;

  explicit ReductionGraph(std::size_t nodes, bool record_in_edges = false);

  std::size_t size() const noexcept { return out_.size(); }

  /// Adds weight to the edge from -> to; self-loops are dropped.
  void add_edge(std::size_t from, std::size_t to, double weight);

  /// Eliminates every node with keep[i] == false, cheapest (in x out degree)
  /// first. Throws NumericalError if an eliminated node has no exit mass.
  void eliminate(const std::vector<bool>& keep);

  /// Fills eliminated entries of a row-major nodes x width matrix of harmonic
  /// functions: v_k = sum_j w_kj v_j / s_k. Kept rows must already be set.
  void propagate_harmonic(std::vector<Real>& values, std::size_t width) const;

  /// Fills expected times to reach the kept set: T_k = (tau_k + sum_j w_kj T_j) / s_k.
  void propagate_times(std::vector<Real>& times) const;

  /// Fills unnormalized stationary weights: pi_k = sum_i pi_i w_ik / s_k.
  /// Requires record_in_edges.
  void propagate_stationary(std::vector<Real>& pi) const;

 private:
  struct Step {
    std::size_t node;
    Real exit_mass;
    Real time_weight;
    std::vector<std::pair<std::size_t, Real>> out;
    std::vector<std::pair<std::size_t, Real>> in;
  };

  void eliminate_node(std::size_t k);
  std::size_t cost(std::size_t k) const { return in_[k].size() * out_[k].size(); }

  std::vector<std::unordered_map<std::size_t, Real>> out_;
  std::vector<std::unordered_set<std::size_t>> in_;
  std::vector<Real> tau_;
  std::vector<Step> log_;
  bool record_in_;
};

}  // namespace memtest::detail
