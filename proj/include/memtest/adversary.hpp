#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "memtest/constructions.hpp"
#include "memtest/distribution.hpp"
#include "memtest/io.hpp"
#include "memtest/machine.hpp"
#include "memtest/rng.hpp"

namespace memtest {

enum class AdversaryMode { transition, stationary };

std::string to_string(AdversaryMode mode);
AdversaryMode adversary_mode_from(const std::string& name);

/// Linear map from a source distribution to what the machine "sees" of it:
/// the stacked transition matrix (transition mode) or pi_u P(.) (stationary
/// mode), together with an orthonormal basis of its zero-sum kernel.
struct InducedLinearMap {
  AdversaryMode mode = AdversaryMode::transition;
  std::size_t n = 0;
  std::size_t S = 0;
  Eigen::MatrixXd A;           // S^2 x n, A((i,j), x) = kernel(i, x)(j), row index i*S + j
  Eigen::MatrixXd B;           // S x n, B(j, x) = sum_i pi_u(i) kernel(i, x)(j); stationary mode only
  std::vector<double> pi_u;    // stationary (Cesaro) vector under u; stationary mode only
  bool irreducible_under_u = true;
  Eigen::MatrixXd basis;       // n x k, orthonormal columns spanning ker(map) ∩ {sum x = 0}
  std::size_t k = 0;
  long long k_lower_bound = 0; // n - 1 - S^2 or n - 1 - S

  const Eigen::MatrixXd& map() const { return mode == AdversaryMode::transition ? A : B; }
};

/// Stacked transition tensor A of shape S^2 x n.
Eigen::MatrixXd transition_tensor(const Machine& m);

/// Orthonormal basis of {x : map x = 0, sum x = 0}, via a column-pivoted QR of
/// the transposed constraint matrix with rank tolerance 1e-10 (relative).
Eigen::MatrixXd zero_sum_kernel(const Eigen::MatrixXd& map);

/// Throws CapacityError when the mode's bound n - 1 - S^2 (or n - 1 - S) is
/// not positive.
InducedLinearMap induced_linear_map(const Machine& m, AdversaryMode mode);

/// A vertex x of span(V) ∩ [-1,1]^n: at least k = V.cols() coordinates sit at
/// +-1, so ||x||_inf = 1 and ||x||_1 >= k. Maximizes a seeded random linear
/// objective with a simplex walk over the coefficient polytope, retrying with
/// fresh objectives and finally a deterministic lexicographic one. Throws
/// InputError for a rank-deficient V and NumericalError if every attempt fails.
Eigen::VectorXd polytope_vertex(const Eigen::MatrixXd& V, std::uint64_t seed = 0);

/// Number of coordinates with |x_i| >= 1 - tol.
std::size_t count_saturated(const Eigen::VectorXd& x, double tol = 1e-9);

struct AdversaryCertificate {
  AdversaryMode mode = AdversaryMode::transition;
  std::vector<double> q;
  double tv = 0.0;
  double guarantee = 0.0;  // k / (2n)
  double residual = 0.0;   // ||P(q) - P(u)||_max or ||pi_u P(q) - pi_u||_1
  std::size_t k = 0;
  long long k_lower_bound = 0;
  bool irreducible_under_u = true;
  std::vector<double> x;   // the vertex used, ||x||_inf = 1; q = u - x / n
  std::string machine_hash;
};

/// Builds an eps-far source the machine cannot tell apart from uniform, with
/// eps = ||x||_1 / (2n) >= k / (2n).
AdversaryCertificate confusable_distribution(const Machine& m, AdversaryMode mode,
                                             std::uint64_t seed = 0);

/// Mode residual of an arbitrary source against uniform.
double transition_residual(const Machine& m, const DiscreteDistribution& q);
double stationary_residual(const Machine& m, const DiscreteDistribution& q);

Json certificate_to_json(const AdversaryCertificate& c);
AdversaryCertificate certificate_from_json(const Json& j);

struct CertificateCheck {
  bool ok = false;
  std::vector<std::string> failures;
  double residual = 0.0;
  double tv = 0.0;
};

/// Re-derives every certificate claim from the machine alone.
CertificateCheck verify_certificate(const Machine& m, const AdversaryCertificate& c,
                                    double tolerance = 1e-9);

/// (1 + eps z_{j/2}) / n at odd 1-based coordinates, (1 - eps z_{j/2}) / n at
/// even ones; z has n/2 entries in {-1, +1}.
DiscreteDistribution paninski(std::size_t n, double eps, std::span<const int> z);

/// Turns a bit stream into symbols X = 2U - B with U uniform on [n/2]
/// (1-based), so bit 1 lands on odd symbols and bit 0 on even ones.
class BinaryReduction {
 public:
  explicit BinaryReduction(std::size_t n);

  std::size_t alphabet() const noexcept { return n_; }
  /// 0-based symbol for one bit.
  Symbol transform(bool bit, Rng& rng) const;
  std::vector<Symbol> transform(std::span<const std::uint8_t> bits, Rng& rng) const;
  /// Law of X when the bits are Bernoulli(theta).
  DiscreteDistribution symbol_law(double theta) const;
  /// Randomized machine over {0, 1} that draws U internally and feeds X to
  /// `tester`.
  Machine wrap(const Machine& tester) const;

 private:
  std::size_t n_;
};

/// Two chains on the pair (1, 2): the first fires H1 when p_2 given {1,2}
/// reaches (1 + eps)/2, the second when p_1 given {1,2} does. Each is sized
/// with gap eps/2 and error budget delta/2.
MinichainTester build_paninski_pair_tester(double eps, double delta, std::size_t n = 2);

}  // namespace memtest
