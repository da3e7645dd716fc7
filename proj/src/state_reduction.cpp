#include "state_reduction.hpp"

#include <algorithm>
#include <functional>
#include <queue>

#include "memtest/errors.hpp"

namespace memtest::detail {

ReductionGraph::ReductionGraph(std::size_t nodes, bool record_in_edges)
    : out_(nodes), in_(nodes), tau_(nodes, 1.0), record_in_(record_in_edges) {}

void ReductionGraph::add_edge(std::size_t from, std::size_t to, double weight) {
  if (from == to || weight <= 0.0) return;
  out_[from][to] += weight;
  in_[to].insert(from);
}

void ReductionGraph::eliminate(const std::vector<bool>& keep) {
  using Entry = std::pair<std::size_t, std::size_t>;  // (cost, node)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
  std::vector<char> done(out_.size(), 0);
  for (std::size_t k = 0; k < out_.size(); ++k) {
    if (!keep[k]) heap.emplace(cost(k), k);
  }
  while (!heap.empty()) {
    const auto [c, k] = heap.top();
    heap.pop();
    if (done[k]) continue;
    if (c != cost(k)) {
      heap.emplace(cost(k), k);
      continue;
    }
    std::vector<std::size_t> touched;
    touched.reserve(in_[k].size() + out_[k].size());
    for (std::size_t i : in_[k]) touched.push_back(i);
    for (const auto& [j, w] : out_[k]) touched.push_back(j);
    eliminate_node(k);
    done[k] = 1;
    for (std::size_t t : touched) {
      if (!keep[t] && !done[t]) heap.emplace(cost(t), t);
    }
  }
}

void ReductionGraph::eliminate_node(std::size_t k) {
  Step step;
  step.node = k;
  step.time_weight = tau_[k];
  step.out.assign(out_[k].begin(), out_[k].end());
  std::sort(step.out.begin(), step.out.end());
  Real s = 0.0;
  for (const auto& [j, w] : step.out) s += w;
  if (!(s > 0.0)) {
    throw NumericalError("state reduction: node " + std::to_string(k + 1) +
                         " has no exit mass (closed set among eliminated states)");
  }
  step.exit_mass = s;

  std::vector<std::size_t> preds(in_[k].begin(), in_[k].end());
  std::sort(preds.begin(), preds.end());
  if (record_in_) step.in.reserve(preds.size());
  for (std::size_t i : preds) {
    auto& row = out_[i];
    auto it = row.find(k);
    const Real w_ik = it->second;
    row.erase(it);
    if (record_in_) step.in.emplace_back(i, w_ik);
    const Real f = w_ik / s;
    tau_[i] += f * tau_[k];
    for (const auto& [j, w_kj] : step.out) {
      if (j == i) continue;
      row[j] += f * w_kj;
      in_[j].insert(i);
    }
    if (!record_in_) {
      // Harmonic values and times are unchanged when a row and its time
      // weight are scaled together; keeping rows at unit mass stops long
      // chains of near-certain returns from underflowing.
      Real sum = 0.0;
      for (const auto& [j, w] : row) sum += w;
      if (sum > 0.0) {
        for (auto& [j, w] : row) w /= sum;
        tau_[i] /= sum;
      }
    }
  }
  for (const auto& [j, w] : step.out) in_[j].erase(k);
  out_[k].clear();
  in_[k].clear();
  log_.push_back(std::move(step));
}

void ReductionGraph::propagate_harmonic(std::vector<Real>& values, std::size_t width) const {
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    Real* dst = &values[it->node * width];
    std::fill(dst, dst + width, 0.0);
    for (const auto& [j, w] : it->out) {
      const Real* src = &values[j * width];
      for (std::size_t c = 0; c < width; ++c) dst[c] += w * src[c];
    }
    for (std::size_t c = 0; c < width; ++c) dst[c] /= it->exit_mass;
  }
}

void ReductionGraph::propagate_times(std::vector<Real>& times) const {
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    Real acc = it->time_weight;
    for (const auto& [j, w] : it->out) acc += w * times[j];
    times[it->node] = acc / it->exit_mass;
  }
}

void ReductionGraph::propagate_stationary(std::vector<Real>& pi) const {
  if (!record_in_) throw NumericalError("stationary propagation needs recorded in-edges");
  for (auto it = log_.rbegin(); it != log_.rend(); ++it) {
    Real acc = 0.0;
    for (const auto& [i, w] : it->in) acc += pi[i] * w;
    pi[it->node] = acc / it->exit_mass;
  }
}

}  // namespace memtest::detail
