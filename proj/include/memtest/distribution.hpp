#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace memtest {

using Symbol = std::size_t;      // 0-based inside the library, 1-based in files
using StateIndex = std::size_t;  // 0-based inside the library, 1-based in files

inline constexpr double kProbabilitySumTolerance = 1e-12;

/// Probability vector over the alphabet [n]. Entries are non-negative and
/// sum to one within kProbabilitySumTolerance; violating vectors are
/// rejected at construction.
class DiscreteDistribution {
 public:
  explicit DiscreteDistribution(std::vector<double> probs);

  static DiscreteDistribution uniform(std::size_t n);
  static DiscreteDistribution point_mass(std::size_t n, Symbol at);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](Symbol i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool operator==(const DiscreteDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

/// Half the l1 distance. Throws InputError on mismatched alphabets.
double tv_distance(const DiscreteDistribution& p, const DiscreteDistribution& q);

/// Squared l2 norm: the chance two independent draws coincide.
double collision_probability(const DiscreteDistribution& p);

/// p_i / (p_i + p_j). Throws InputError when both entries are zero.
double pair_conditional(const DiscreteDistribution& p, Symbol i, Symbol j);

}  // namespace memtest
