#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "memtest/distribution.hpp"
#include "memtest/machine.hpp"

namespace memtest {

inline constexpr double kAbsorptionTolerance = 1e-9;
inline constexpr double kStationaryTolerance = 1e-9;

/// Row-stochastic S x S matrix; rows are validated to sum to one within
/// kProbabilitySumTolerance.
class TransitionMatrix {
 public:
  using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  explicit TransitionMatrix(Sparse matrix);
  static TransitionMatrix from_dense(const Eigen::MatrixXd& dense);

  std::size_t size() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  const Sparse& sparse() const noexcept { return m_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(m_); }
  double operator()(StateIndex i, StateIndex j) const {
    return m_.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  template <class F>
  void for_each_in_row(StateIndex i, F&& f) const {
    for (Sparse::InnerIterator it(m_, static_cast<Eigen::Index>(i)); it; ++it) {
      f(static_cast<StateIndex>(it.col()), it.value());
    }
  }

 private:
  Sparse m_;
};

/// P[i][j] = sum_x p_x kernel(i, x)(j).
TransitionMatrix induced_matrix(const Machine& m, const DiscreteDistribution& p);

/// Closed communicating classes (recurrent) and the remaining transient
/// states. Classes are ordered by their smallest state; states inside a class
/// are sorted.
struct Decomposition {
  std::vector<std::vector<StateIndex>> classes;
  std::vector<StateIndex> transient;
  std::vector<int> class_of;  // -1 for transient states

  bool irreducible() const { return classes.size() == 1 && transient.empty(); }
};

Decomposition classify(const TransitionMatrix& P);

/// Restriction of P to a closed class, re-indexed in class order.
TransitionMatrix restrict_to_class(const TransitionMatrix& P, std::span<const StateIndex> cls);

/// Stationary vector of a recurrent class, aligned with `cls`. Throws
/// InputError if the class is not closed and NumericalError if the balance
/// residual exceeds kStationaryTolerance.
std::vector<double> stationary(const TransitionMatrix& P, std::span<const StateIndex> cls);

/// Period of an irreducible class (1 = aperiodic).
std::size_t class_period(const TransitionMatrix& P, std::span<const StateIndex> cls);

/// Absorption probabilities into every recurrent class from every state,
/// plus expected steps until some class is entered.
struct AbsorptionSolution {
  std::size_t num_states = 0;
  std::size_t num_classes = 0;
  std::vector<double> probs;      // row-major num_states x num_classes
  std::vector<double> mean_time;  // expected steps to enter a recurrent class
  double row_sum_residual = 0.0;  // max |sum_k probs(s,k) - 1|
  double balance_residual = 0.0;  // max first-step residual on transient states

  double at(StateIndex s, std::size_t k) const { return probs[s * num_classes + k]; }
  std::vector<double> row(StateIndex s) const;
};

AbsorptionSolution solve_absorption(const TransitionMatrix& P, const Decomposition& dec);

/// Pr(from -> R_k) for every class k.
std::vector<double> absorption(const TransitionMatrix& P, const Decomposition& dec,
                               StateIndex from);

struct ChainAnalysis {
  Decomposition decomposition;
  StateIndex init = 0;
  std::vector<double> absorption;               // Pr(init -> R_k)
  std::vector<std::vector<double>> stationary;  // per class, aligned with the class
  std::vector<double> cesaro;                   // limiting time-averaged distribution
  double mean_absorption_time = 0.0;            // expected steps until a class is entered
  double stationary_residual = 0.0;
  double absorption_residual = 0.0;
};

ChainAnalysis analyze(const TransitionMatrix& P, StateIndex init);
ChainAnalysis analyze(const Machine& m, const DiscreteDistribution& p);

/// Cesaro-limit probability that the decision disagrees with `truth`:
/// sum_k Pr(init -> R_k) * pi^(k)(states deciding against truth).
double error_probability(const ChainAnalysis& a, std::span<const Hypothesis> decisions,
                         Hypothesis truth);
double error_probability(const Machine& m, const DiscreteDistribution& p, Hypothesis truth);

/// Expected steps to reach `targets` from every state. With `absorbed_in`
/// (a recurrent class), times are conditioned on eventually entering that
/// class via the Doob h-transform. Entries are +inf where the target is not
/// reached almost surely (or the conditioning event has probability zero).
std::vector<double> expected_hitting_times(
    const TransitionMatrix& P, std::span<const StateIndex> targets,
    std::optional<std::span<const StateIndex>> absorbed_in = std::nullopt);

/// Smallest t >= 1 with max_i tv(P^t(i, .), pi) <= 1/4. Throws InputError for
/// reducible or periodic chains.
std::size_t mixing_time(const TransitionMatrix& P);

/// Ergodicization: every recurrent state is connected back to
/// the initial state with probability 1 / (M * T), T being the largest
/// (conditional hitting time + within-class mixing time) over reachable classes.
struct ErgodicizedChain {
  TransitionMatrix base;
  TransitionMatrix result;
  StateIndex init = 0;
  bool changed = false;
  std::string notice{};
  double slack = 0.0;
  double mixing_bound = 0.0;  // T
  double connect_prob = 0.0;  // 1 / (M T)
  Decomposition base_decomposition{};
  std::vector<double> stationary{};    // of the result, over all states
  std::vector<double> class_mass{};    // pi(R_k) in the result
  std::vector<double> absorption{};    // Pr(init -> R_k) in the base
  std::vector<std::vector<double>> base_stationary{};  // pi^inf per class

  /// max_k |pi(R_k) - Pr(init -> R_k)|.
  double class_mass_error() const;
  /// True when every class meets |pi(R_k) - Pr(init -> R_k)| <= 1/(M+1).
  bool class_mass_bound_holds() const;
  /// Smallest slack pi~_i - (pi_i^inf - (|R_k|/M)(1 + 1/pi(R_k))) over states
  /// of classes with positive mass; the within-class bound holds iff >= 0.
  double within_class_margin() const;
};

ErgodicizedChain ergodicize(const TransitionMatrix& P, StateIndex init, double slack);
ErgodicizedChain ergodicize(const Machine& m, const DiscreteDistribution& p, double slack);

/// max_i |pi_i E[tau_i] - 1| with return times from dense first-passage solves.
double kac_check(const TransitionMatrix& P);

/// |sum_{i in C, j notin C} pi_i P_ij - sum_{i notin C, j in C} pi_i P_ij|.
double flow_balance_check(const TransitionMatrix& P, std::span<const StateIndex> cut);

}  // namespace memtest
