#include "memtest/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "memtest/errors.hpp"
#include "memtest/markov.hpp"

namespace memtest {
namespace {

constexpr double kRankTolerance = 1e-10;
constexpr double kSaturation = 1e-9;
constexpr double kPivot = 1e-12;

// Constraint r of the coefficient polytope: sign(r) * V.row(r / 2) c <= 1.
struct CubeSlice {
  const Eigen::MatrixXd& V;

  std::size_t count() const { return 2 * static_cast<std::size_t>(V.rows()); }
  Eigen::RowVectorXd row(std::size_t r) const {
    const auto i = static_cast<Eigen::Index>(r / 2);
    return (r % 2 == 0 ? 1.0 : -1.0) * V.row(i);
  }
  Eigen::MatrixXd rows(const std::vector<std::size_t>& active) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(active.size()), V.cols());
    for (std::size_t a = 0; a < active.size(); ++a) out.row(static_cast<Eigen::Index>(a)) = row(active[a]);
    return out;
  }

  // Largest step along d before some inactive constraint becomes tight.
  // Ties go to the smallest constraint index.
  std::optional<std::pair<std::size_t, double>> ratio_test(const Eigen::VectorXd& c,
                                                           const Eigen::VectorXd& d,
                                                           const std::vector<std::size_t>& active) const {
    std::optional<std::pair<std::size_t, double>> best;
    for (std::size_t r = 0; r < count(); ++r) {
      if (std::find(active.begin(), active.end(), r) != active.end()) continue;
      const Eigen::RowVectorXd a = row(r);
      const double ad = a.dot(d);
      if (ad <= kPivot) continue;
      const double t = std::max(0.0, (1.0 - a.dot(c)) / ad);
      if (!best || t < best->second - 1e-14) best = std::make_pair(r, t);
    }
    return best;
  }
};

// Component of g orthogonal to the active rows.
Eigen::VectorXd project_out(const Eigen::MatrixXd& active_rows, const Eigen::VectorXd& g) {
  if (active_rows.rows() == 0) return g;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(active_rows.transpose());
  const Eigen::MatrixXd Q = qr.householderQ() *
                            Eigen::MatrixXd::Identity(active_rows.cols(), active_rows.rows());
  return g - Q * (Q.transpose() * g);
}

std::optional<Eigen::VectorXd> simplex_vertex(const Eigen::MatrixXd& V, const Eigen::VectorXd& g) {
  const CubeSlice poly{V};
  const auto k = static_cast<std::size_t>(V.cols());
  Eigen::VectorXd c = Eigen::VectorXd::Zero(V.cols());
  std::vector<std::size_t> active;

  // Ray shooting: follow the objective inside the face until k constraints
  // are tight.
  while (active.size() < k) {
    const Eigen::MatrixXd rows = poly.rows(active);
    Eigen::VectorXd d = project_out(rows, g);
    if (d.norm() <= 1e-12 * std::max(1.0, g.norm())) {
      double best = 0.0;
      for (Eigen::Index j = 0; j < V.cols(); ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(V.cols(), j);
        Eigen::VectorXd cand = project_out(rows, e);
        if (cand.norm() > best) {
          best = cand.norm();
          d = cand;
        }
      }
    }
    const auto hit = poly.ratio_test(c, d, active);
    if (!hit) return std::nullopt;
    c += hit->second * d;
    active.push_back(hit->first);
  }

  // Simplex walk with Bland's rule.
  const std::size_t max_pivots = 50 * poly.count() + 1000;
  for (std::size_t pivot = 0;; ++pivot) {
    if (pivot > max_pivots) return std::nullopt;
    const Eigen::MatrixXd Aa = poly.rows(active);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Aa);
    const Eigen::VectorXd lambda = lu.transpose().solve(g);
    std::optional<std::size_t> leave;
    for (std::size_t a = 0; a < k; ++a) {
      if (lambda(static_cast<Eigen::Index>(a)) < -1e-12 &&
          (!leave || active[a] < active[*leave])) {
        leave = a;
      }
    }
    if (!leave) break;
    const Eigen::VectorXd d =
        lu.solve(-Eigen::VectorXd::Unit(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(*leave)));
    const auto hit = poly.ratio_test(c, d, active);
    if (!hit) return std::nullopt;
    c += hit->second * d;
    active[*leave] = hit->first;
  }

  // Re-solve the vertex from its active set to shed accumulated rounding.
  const Eigen::MatrixXd Aa = poly.rows(active);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Aa);
  if (lu.rank() < static_cast<Eigen::Index>(k)) return std::nullopt;
  c = lu.solve(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k)));
  return Eigen::VectorXd(V * c);
}

double max_abs_difference(const TransitionMatrix& a, const TransitionMatrix& b) {
  const TransitionMatrix::Sparse diff = a.sparse() - b.sparse();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < diff.outerSize(); ++i) {
    for (TransitionMatrix::Sparse::InnerIterator it(diff, i); it; ++it) {
      worst = std::max(worst, std::abs(it.value()));
    }
  }
  return worst;
}

double balance_defect(const TransitionMatrix& P, const std::vector<double>& pi) {
  std::vector<double> next(pi.size(), 0.0);
  for (StateIndex i = 0; i < P.size(); ++i) {
    if (pi[i] == 0.0) continue;
    P.for_each_in_row(i, [&](StateIndex j, double w) { next[j] += pi[i] * w; });
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) sum += std::abs(next[i] - pi[i]);
  return sum;
}

long long bound_for(AdversaryMode mode, std::size_t n, std::size_t S) {
  const auto nn = static_cast<long long>(n);
  const auto ss = static_cast<long long>(S);
  return mode == AdversaryMode::transition ? nn - 1 - ss * ss : nn - 1 - ss;
}

}  // namespace

std::string to_string(AdversaryMode mode) {
  return mode == AdversaryMode::transition ? "transition" : "stationary";
}

AdversaryMode adversary_mode_from(const std::string& name) {
  if (name == "transition") return AdversaryMode::transition;
  if (name == "stationary") return AdversaryMode::stationary;
  throw InputError("unknown adversary mode \"" + name + "\" (transition|stationary)");
}

Eigen::MatrixXd transition_tensor(const Machine& m) {
  const std::size_t S = m.num_states();
  const std::size_t n = m.alphabet_size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S * S),
                                            static_cast<Eigen::Index>(n));
  for (StateIndex i = 0; i < S; ++i) {
    for (Symbol x = 0; x < n; ++x) {
      for (const auto& t : m.kernel(i, x)) {
        A(static_cast<Eigen::Index>(i * S + t.state), static_cast<Eigen::Index>(x)) += t.prob;
      }
    }
  }
  return A;
}

Eigen::MatrixXd zero_sum_kernel(const Eigen::MatrixXd& map) {
  const Eigen::Index n = map.cols();
  Eigen::MatrixXd constraints(map.rows() + 1, n);
  constraints << map, Eigen::RowVectorXd::Ones(n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(constraints.transpose());
  qr.setThreshold(kRankTolerance);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd Q = qr.householderQ();
  return Q.rightCols(n - rank);
}

InducedLinearMap induced_linear_map(const Machine& m, AdversaryMode mode) {
  InducedLinearMap L;
  L.mode = mode;
  L.n = m.alphabet_size();
  L.S = m.num_states();
  L.k_lower_bound = bound_for(mode, L.n, L.S);
  if (L.k_lower_bound <= 0) {
    const std::string rhs = mode == AdversaryMode::transition ? "S^2" : "S";
    throw CapacityError(to_string(mode) + " mode needs k >= n - 1 - " + rhs + " > 0, but n - 1 - " +
                        rhs + " = " + std::to_string(L.n) + " - 1 - " +
                        std::to_string(mode == AdversaryMode::transition ? L.S * L.S : L.S) +
                        " = " + std::to_string(L.k_lower_bound));
  }
  if (mode == AdversaryMode::transition) {
    L.A = transition_tensor(m);
  } else {
    const auto analysis = analyze(m, DiscreteDistribution::uniform(L.n));
    L.irreducible_under_u = analysis.decomposition.irreducible();
    L.pi_u = analysis.cesaro;
    L.B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L.S), static_cast<Eigen::Index>(L.n));
    for (StateIndex i = 0; i < L.S; ++i) {
      if (L.pi_u[i] == 0.0) continue;
      for (Symbol x = 0; x < L.n; ++x) {
        for (const auto& t : m.kernel(i, x)) {
          L.B(static_cast<Eigen::Index>(t.state), static_cast<Eigen::Index>(x)) += L.pi_u[i] * t.prob;
        }
      }
    }
  }
  L.basis = zero_sum_kernel(L.map());
  L.k = static_cast<std::size_t>(L.basis.cols());
  if (L.k == 0) throw NumericalError("kernel is empty despite a positive dimension bound");
  return L;
}

std::size_t count_saturated(const Eigen::VectorXd& x, double tol) {
  std::size_t c = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x(i)) >= 1.0 - tol) ++c;
  }
  return c;
}

Eigen::VectorXd polytope_vertex(const Eigen::MatrixXd& V, std::uint64_t seed) {
  const auto k = static_cast<std::size_t>(V.cols());
  if (k == 0 || V.rows() == 0) throw InputError("polytope_vertex needs a non-empty basis");
  if (static_cast<std::size_t>(V.rows()) < k) throw InputError("basis has more columns than rows");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
  qr.setThreshold(kRankTolerance);
  if (static_cast<std::size_t>(qr.rank()) < k) {
    throw InputError("degenerate basis: rank " + std::to_string(qr.rank()) + " < k = " +
                     std::to_string(k));
  }

  auto accept = [&](std::optional<Eigen::VectorXd> x) -> std::optional<Eigen::VectorXd> {
    if (!x || x->cwiseAbs().maxCoeff() > 1.0 + kSaturation || count_saturated(*x) < k) {
      return std::nullopt;
    }
    for (Eigen::Index i = 0; i < x->size(); ++i) (*x)(i) = std::clamp((*x)(i), -1.0, 1.0);
    return x;
  };

  Rng rng(seed, 0x766572746578ULL);
  constexpr int kAttempts = 8;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Eigen::VectorXd w(V.rows());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
    if (auto x = accept(simplex_vertex(V, V.transpose() * w))) return *x;
  }
  Eigen::VectorXd w(V.rows());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::ldexp(1.0, -static_cast<int>(i));
  if (auto x = accept(simplex_vertex(V, V.transpose() * w))) return *x;
  throw NumericalError("polytope_vertex: no vertex found after retries");
}

double transition_residual(const Machine& m, const DiscreteDistribution& q) {
  return max_abs_difference(induced_matrix(m, q),
                            induced_matrix(m, DiscreteDistribution::uniform(m.alphabet_size())));
}

double stationary_residual(const Machine& m, const DiscreteDistribution& q) {
  const auto a = analyze(m, DiscreteDistribution::uniform(m.alphabet_size()));
  return balance_defect(induced_matrix(m, q), a.cesaro);
}

AdversaryCertificate confusable_distribution(const Machine& m, AdversaryMode mode,
                                             std::uint64_t seed) {
  const InducedLinearMap L = induced_linear_map(m, mode);
  const Eigen::VectorXd x = polytope_vertex(L.basis, seed);
  const double nd = static_cast<double>(L.n);

  AdversaryCertificate c;
  c.mode = mode;
  c.k = L.k;
  c.k_lower_bound = L.k_lower_bound;
  c.irreducible_under_u = L.irreducible_under_u;
  c.guarantee = static_cast<double>(L.k) / (2.0 * nd);
  c.x.assign(x.data(), x.data() + x.size());
  c.q.resize(L.n);
  for (std::size_t i = 0; i < L.n; ++i) c.q[i] = (1.0 - c.x[i]) / nd;
  const DiscreteDistribution q(c.q);
  c.tv = tv_distance(q, DiscreteDistribution::uniform(L.n));
  if (mode == AdversaryMode::transition) {
    c.residual = transition_residual(m, q);
  } else {
    c.residual = balance_defect(induced_matrix(m, q), L.pi_u);
  }
  c.machine_hash = machine_hash(m);
  return c;
}

Json certificate_to_json(const AdversaryCertificate& c) {
  return {{"mode", to_string(c.mode)},
          {"q", c.q},
          {"tv", c.tv},
          {"guarantee", c.guarantee},
          {"residual", c.residual},
          {"k", c.k},
          {"k_lower_bound", c.k_lower_bound},
          {"irreducible_under_u", c.irreducible_under_u},
          {"x", c.x},
          {"machine_hash", c.machine_hash}};
}

AdversaryCertificate certificate_from_json(const Json& j) {
  try {
    AdversaryCertificate c;
    c.mode = adversary_mode_from(j.at("mode").get<std::string>());
    c.q = j.at("q").get<std::vector<double>>();
    c.tv = j.at("tv").get<double>();
    c.guarantee = j.at("guarantee").get<double>();
    c.residual = j.at("residual").get<double>();
    c.k = j.at("k").get<std::size_t>();
    c.k_lower_bound = j.value("k_lower_bound", 0LL);
    c.irreducible_under_u = j.value("irreducible_under_u", true);
    c.x = j.at("x").get<std::vector<double>>();
    c.machine_hash = j.at("machine_hash").get<std::string>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed certificate JSON: ") + e.what());
  }
}

CertificateCheck verify_certificate(const Machine& m, const AdversaryCertificate& c,
                                    double tolerance) {
  CertificateCheck check;
  auto fail = [&](std::string why) { check.failures.push_back(std::move(why)); };
  const std::size_t n = m.alphabet_size();
  if (c.machine_hash != machine_hash(m)) fail("machine hash does not match");
  if (c.q.size() != n || c.x.size() != n) {
    fail("certificate vectors have the wrong length");
    return check;
  }
  std::optional<DiscreteDistribution> q;
  try {
    q.emplace(c.q);
  } catch (const InputError& e) {
    fail(std::string("q is not a distribution: ") + e.what());
    return check;
  }
  const auto u = DiscreteDistribution::uniform(n);
  check.tv = tv_distance(*q, u);
  const double nd = static_cast<double>(n);
  if (std::abs(check.tv - c.tv) > 1e-12) fail("reported tv differs from recomputed tv");

  std::optional<InducedLinearMap> L;
  try {
    L.emplace(induced_linear_map(m, c.mode));
  } catch (const std::exception& e) {
    fail(std::string("mode preconditions fail: ") + e.what());
    return check;
  }
  if (L->k != c.k) fail("kernel dimension differs: recomputed k = " + std::to_string(L->k));
  if (std::abs(c.guarantee - static_cast<double>(L->k) / (2.0 * nd)) > 1e-15) {
    fail("guarantee is not k / (2n)");
  }
  if (check.tv < c.guarantee - 1e-12) fail("tv falls below the guarantee");

  const Eigen::Map<const Eigen::VectorXd> x(c.x.data(), static_cast<Eigen::Index>(n));
  if (x.cwiseAbs().maxCoeff() > 1.0 + 1e-12) fail("vertex leaves the cube");
  if (count_saturated(x) < L->k) fail("vertex has fewer than k saturated coordinates");
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(c.q[i] - (1.0 - c.x[i]) / nd) > 1e-12) {
      fail("q is not u - x / n");
      break;
    }
  }
  const double in_kernel = (L->map() * x).cwiseAbs().maxCoeff();
  if (in_kernel > tolerance) fail("vertex is not in the kernel of the induced map");

  check.residual = c.mode == AdversaryMode::transition
                       ? transition_residual(m, *q)
                       : balance_defect(induced_matrix(m, *q), L->pi_u);
  if (check.residual > tolerance) fail("mode residual above tolerance");
  check.ok = check.failures.empty();
  return check;
}

DiscreteDistribution paninski(std::size_t n, double eps, std::span<const int> z) {
  if (n == 0 || n % 2 != 0) throw InputError("paninski needs an even alphabet size");
  if (z.size() != n / 2) throw InputError("paninski needs n/2 signs");
  if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("paninski needs eps in [0, 1]");
  const double nd = static_cast<double>(n);
  std::vector<double> probs(n);
  for (std::size_t j = 0; j < n; ++j) {
    const int sign = z[j / 2];
    if (sign != 1 && sign != -1) throw InputError("paninski signs must be +1 or -1");
    probs[j] = (j % 2 == 1 ? 1.0 + eps * sign : 1.0 - eps * sign) / nd;
  }
  return DiscreteDistribution(std::move(probs));
}

BinaryReduction::BinaryReduction(std::size_t n) : n_(n) {
  if (n == 0 || n % 2 != 0) throw InputError("binary reduction needs an even alphabet size");
}

Symbol BinaryReduction::transform(bool bit, Rng& rng) const {
  const std::size_t u = rng.below(n_ / 2);  // U - 1
  return 2 * u + (bit ? 0 : 1);
}

std::vector<Symbol> BinaryReduction::transform(std::span<const std::uint8_t> bits, Rng& rng) const {
  std::vector<Symbol> out;
  out.reserve(bits.size());
  for (auto b : bits) out.push_back(transform(b != 0, rng));
  return out;
}

DiscreteDistribution BinaryReduction::symbol_law(double theta) const {
  if (!(theta >= 0.0 && theta <= 1.0)) throw InputError("theta must lie in [0, 1]");
  const double half = static_cast<double>(n_) / 2.0;
  std::vector<double> probs(n_);
  for (std::size_t j = 0; j < n_; ++j) probs[j] = (j % 2 == 0 ? theta : 1.0 - theta) / half;
  return DiscreteDistribution(std::move(probs));
}

Machine BinaryReduction::wrap(const Machine& tester) const {
  if (tester.alphabet_size() != n_) throw InputError("tester alphabet differs from the reduction's");
  const std::size_t S = tester.num_states();
  const double w = 2.0 / static_cast<double>(n_);
  Machine::Builder b(S, 2);
  b.init(tester.init());
  for (StateIndex s = 0; s < S; ++s) {
    b.decision(s, tester.decision(s));
    for (int bit = 0; bit < 2; ++bit) {
      SuccessorList mix;
      for (std::size_t u = 0; u < n_ / 2; ++u) {
        for (const auto& t : tester.kernel(s, 2 * u + (bit == 1 ? 0 : 1))) {
          mix.push_back({t.state, w * t.prob});
        }
      }
      b.transition(s, static_cast<Symbol>(bit), normalize_successors(std::move(mix), S));
    }
  }
  return std::move(b).build();
}

MinichainTester build_paninski_pair_tester(double eps, double delta, std::size_t n) {
  if (n < 2) throw ParameterError("pair tester needs n >= 2");
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("eps must lie in (0, 1)");
  if (!(delta > 0.0 && delta < 0.5)) throw ParameterError("delta must lie in (0, 1/2)");
  const double p = (1.0 + eps) / 2.0;
  const double q = p - eps / 2.0;
  const double budget = delta / 2.0;
  const IsitParams isit = make_isit_params(isit_size(budget, p, 2.0 / eps), p, q);
  std::vector<ChainSpec> specs{
      {TestedQuantity::pair_second, 1, Watch::pair(n, 0, 1), isit, budget, ExitTarget::next,
       ExitTarget::h1},
      {TestedQuantity::pair_first, 1, Watch::pair(n, 1, 0), isit, budget, ExitTarget::h0,
       ExitTarget::h1},
  };
  auto tester = assemble_chains("paninski-pair", n, specs);
  tester.layout.eps = eps;
  tester.layout.delta = delta;
  return tester;
}

}  // namespace memtest
