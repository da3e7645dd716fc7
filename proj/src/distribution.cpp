#include "memtest/distribution.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "memtest/errors.hpp"

namespace memtest {

DiscreteDistribution::DiscreteDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw InputError("distribution over an empty alphabet");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double v = probs_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InputError("probability entry " + std::to_string(i + 1) +
                       " out of [0,1]: " + std::to_string(v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw InputError("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
}

DiscreteDistribution DiscreteDistribution::uniform(std::size_t n) {
  if (n == 0) throw InputError("uniform distribution over an empty alphabet");
  return DiscreteDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DiscreteDistribution DiscreteDistribution::point_mass(std::size_t n, Symbol at) {
  if (at >= n) throw InputError("point mass outside the alphabet");
  std::vector<double> probs(n, 0.0);
  probs[at] = 1.0;
  return DiscreteDistribution(std::move(probs));
}

double tv_distance(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  if (p.size() != q.size()) {
    throw InputError("tv_distance: alphabet sizes differ (" + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()) + ")");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

double collision_probability(const DiscreteDistribution& p) {
  const auto v = p.probs();
  return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

double pair_conditional(const DiscreteDistribution& p, Symbol i, Symbol j) {
  if (i >= p.size() || j >= p.size()) throw InputError("pair_conditional: symbol out of range");
  const double mass = p[i] + p[j];
  if (mass <= 0.0) {
    throw InputError("pair_conditional: degenerate pair (" + std::to_string(i + 1) + "," +
                     std::to_string(j + 1) + ") has zero mass");
  }
  return p[i] / mass;
}

}  // namespace memtest
