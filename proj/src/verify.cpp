#include "memtest/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/errors.hpp"
#include "memtest/simulate.hpp"

namespace memtest {
namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

CriterionResult timed(int id, std::string name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  try {
    const Outcome o = body();
    r.passed = o.passed;
    r.detail = o.detail;
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

DiscreteDistribution bernoulli(double theta) { return DiscreteDistribution({1.0 - theta, theta}); }

std::vector<int> signs_of(std::size_t mask, std::size_t count) {
  std::vector<int> z(count);
  for (std::size_t i = 0; i < count; ++i) z[i] = (mask >> i) & 1U ? -1 : 1;
  return z;
}

// One exact-analysis case: a machine with a chain layout, a source and the
// hypothesis that source belongs to.
struct Case {
  std::string label;
  const Machine* machine;
  const TesterLayout* layout;
  DiscreteDistribution source;
  Hypothesis truth;
  double budget;  // the error bound the case must meet
};

struct IsitCell {
  double delta, p, K, q;
  IsitMachine isit;
};

std::vector<IsitCell> isit_cells() {
  std::vector<IsitCell> cells;
  for (double delta : {0.05, 0.1, 0.2}) {
    for (double p : {0.3, 0.5, 0.7}) {
      for (double K : {4.0, 10.0, 25.0}) {
        const bool strict = 2.0 / K <= p + 1e-12 && p <= 1.0 - 1.0 / K + 1e-12;
        const std::size_t N =
            isit_size(delta, p, K, strict ? SizingRange::strict : SizingRange::relaxed);
        const double q = p - 1.0 / K;
        cells.push_back({delta, p, K, q, build_isit(N, p, q)});
      }
    }
  }
  return cells;
}

std::vector<Case> isit_cases(const std::vector<IsitCell>& cells) {
  std::vector<Case> cases;
  for (const auto& c : cells) {
    const std::string tag = "isit(delta=" + num(c.delta) + ",p=" + num(c.p) + ",K=" + num(c.K) + ")";
    cases.push_back({tag + " theta=p", &c.isit.machine, &c.isit.layout, bernoulli(c.p),
                     Hypothesis::H0, c.delta});
    cases.push_back({tag + " theta=q", &c.isit.machine, &c.isit.layout, bernoulli(c.q),
                     Hypothesis::H1, c.delta});
  }
  return cases;
}

struct TesterSuite {
  std::size_t n;
  double eps, delta;
  MinichainTester tester;
};

std::vector<TesterSuite> minichain_suites() {
  std::vector<TesterSuite> out;
  for (std::size_t n : {4, 8}) out.push_back({n, 0.5, 0.2, build_minichain_tester(n, 0.5, 0.2)});
  return out;
}

std::vector<Case> tester_cases(const std::vector<TesterSuite>& suites, std::uint64_t seed) {
  std::vector<Case> cases;
  for (const auto& s : suites) {
    const std::string tag = "minichain(n=" + std::to_string(s.n) + ")";
    const Machine* m = &s.tester.machine;
    const TesterLayout* l = &s.tester.layout;
    cases.push_back({tag + " u", m, l, DiscreteDistribution::uniform(s.n), Hypothesis::H0, s.delta});
    for (std::size_t mask = 0; mask < (std::size_t{1} << (s.n / 2)); ++mask) {
      cases.push_back({tag + " paninski z#" + std::to_string(mask), m, l,
                       paninski(s.n, s.eps, signs_of(mask, s.n / 2)), Hypothesis::H1, s.delta});
    }
    Rng rng(seed, 0x746573746572ULL + s.n);
    for (int i = 0; i < 50; ++i) {
      cases.push_back({tag + " far#" + std::to_string(i), m, l,
                       random_far_distribution(s.n, s.eps, rng), Hypothesis::H1, s.delta});
    }
  }
  return cases;
}

struct PairSuite {
  double eps;
  MinichainTester tester;
};

constexpr std::size_t kPairAlphabet = 8;
constexpr double kPairDelta = 0.1;

std::vector<PairSuite> pair_suites() {
  std::vector<PairSuite> out;
  for (double eps : {0.5, 0.25, 0.125}) {
    out.push_back({eps, build_paninski_pair_tester(eps, kPairDelta, kPairAlphabet)});
  }
  return out;
}

std::vector<Case> pair_cases(const std::vector<PairSuite>& suites) {
  std::vector<Case> cases;
  for (const auto& s : suites) {
    const std::string tag = "pair(eps=" + num(s.eps) + ")";
    const Machine* m = &s.tester.machine;
    const TesterLayout* l = &s.tester.layout;
    cases.push_back({tag + " u", m, l, DiscreteDistribution::uniform(kPairAlphabet),
                     Hypothesis::H0, kPairDelta});
    for (std::size_t mask = 0; mask < (std::size_t{1} << (kPairAlphabet / 2)); ++mask) {
      cases.push_back({tag + " z#" + std::to_string(mask), m, l,
                       paninski(kPairAlphabet, s.eps, signs_of(mask, kPairAlphabet / 2)),
                       Hypothesis::H1, kPairDelta});
    }
  }
  return cases;
}

struct ExactCheck {
  std::size_t failures = 0;
  double worst = 0.0;
  std::string worst_label;
};

ExactCheck exact_errors(const std::vector<Case>& cases, bool strict_less) {
  ExactCheck out;
  for (const auto& c : cases) {
    const double pe = error_probability(*c.machine, c.source, c.truth);
    const bool ok = strict_less ? pe < c.budget : pe <= c.budget;
    if (!ok) ++out.failures;
    if (pe / c.budget > out.worst) {
      out.worst = pe / c.budget;
      out.worst_label = c.label + " pe=" + num(pe);
    }
  }
  return out;
}

std::vector<TransitionMatrix> absorbing_corpus(std::uint64_t seed) {
  Rng rng(seed, 0x6572676f646963ULL);
  std::vector<TransitionMatrix> out;
  for (int i = 0; i < 20; ++i) out.push_back(random_absorbing_chain(4 + rng.below(37), rng));
  return out;
}

constexpr double kSlacks[] = {10.0, 100.0, 1000.0};

}  // namespace

DiscreteDistribution random_distribution(std::size_t n, Rng& rng, double spike) {
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& v : w) {
    v = std::pow(-std::log(rng.uniform_open01()), spike);
    total += v;
  }
  for (auto& v : w) v /= total;
  // Push the rounding residue onto the largest entry so the sum is exact to
  // within a few ulps.
  const double rest = 1.0 - std::accumulate(w.begin(), w.end(), 0.0);
  *std::max_element(w.begin(), w.end()) += rest;
  return DiscreteDistribution(std::move(w));
}

DiscreteDistribution random_far_distribution(std::size_t n, double eps, Rng& rng) {
  const double nd = static_cast<double>(n);
  if (!(eps < 1.0 - 1.0 / nd)) throw InputError("no distribution on this alphabet is that far");
  const auto u = DiscreteDistribution::uniform(n);
  for (int attempt = 0; attempt < 200; ++attempt) {
    const double spike = std::ldexp(1.0, static_cast<int>(rng.below(5)));
    auto p = random_distribution(n, rng, spike);
    if (tv_distance(p, u) > eps) return p;
  }
  // Mix uniform with a point mass just far enough.
  const Symbol at = rng.below(n);
  const double lambda = std::min(1.0, (eps + 0.5 * (1.0 - 1.0 / nd - eps)) / (1.0 - 1.0 / nd));
  std::vector<double> probs(n, (1.0 - lambda) / nd);
  probs[at] += lambda;
  return DiscreteDistribution(std::move(probs));
}

Machine random_deterministic_machine(std::size_t S, std::size_t n, Rng& rng) {
  Machine::Builder b(S, n);
  b.init(rng.below(S));
  for (StateIndex s = 0; s < S; ++s) {
    b.decision(s, rng.below(2) ? Hypothesis::H1 : Hypothesis::H0);
    for (Symbol x = 0; x < n; ++x) b.transition(s, x, static_cast<StateIndex>(rng.below(S)));
  }
  return std::move(b).build();
}

Machine random_irreducible_machine(std::size_t S, std::size_t n, Rng& rng) {
  const auto u = DiscreteDistribution::uniform(n);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Machine m = random_deterministic_machine(S, n, rng);
    if (classify(induced_matrix(m, u)).irreducible()) return m;
  }
  throw NumericalError("could not draw an irreducible machine");
}

TransitionMatrix random_irreducible_chain(std::size_t S, Rng& rng) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  for (std::size_t i = 0; i < S; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    P(ii, static_cast<Eigen::Index>((i + 1) % S)) += 0.1 + rng.uniform01();
    P(ii, ii) += 0.1 + rng.uniform01();
    const std::size_t extra = rng.below(4);
    for (std::size_t e = 0; e < extra; ++e) {
      P(ii, static_cast<Eigen::Index>(rng.below(S))) += rng.uniform01();
    }
    P.row(ii) /= P.row(ii).sum();
  }
  return TransitionMatrix::from_dense(P);
}

TransitionMatrix random_absorbing_chain(std::size_t S, Rng& rng) {
  if (S < 4) throw InputError("absorbing corpus chains need S >= 4");
  // Class sizes first, transient states take what is left (at least two).
  std::vector<std::size_t> sizes;
  std::size_t used = 0;
  const std::size_t classes = 1 + rng.below(3);
  for (std::size_t k = 0; k < classes && used + 3 <= S; ++k) {
    const std::size_t size = 1 + rng.below(std::min<std::size_t>(5, S - used - 2));
    sizes.push_back(size);
    used += size;
  }
  if (sizes.size() == 1 && used + 3 <= S) {
    sizes.push_back(1);  // keep the chain reducible with at least two classes
    ++used;
  }
  const std::size_t T = S - used;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  std::vector<std::size_t> first;
  std::size_t at = T;
  for (std::size_t size : sizes) {
    first.push_back(at);
    const bool periodic = size > 1 && rng.below(3) == 0;
    for (std::size_t i = 0; i < size; ++i) {
      const auto row = static_cast<Eigen::Index>(at + i);
      if (size == 1) {
        P(row, row) = 1.0;
        continue;
      }
      P(row, static_cast<Eigen::Index>(at + (i + 1) % size)) += 0.2 + rng.uniform01();
      if (!periodic) {
        P(row, static_cast<Eigen::Index>(at + rng.below(size))) += rng.uniform01();
        P(row, row) += 0.1 * rng.uniform01();
      }
      P.row(row) /= P.row(row).sum();
    }
    at += size;
  }
  for (std::size_t i = 0; i < T; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    if (i + 1 < T) P(row, row + 1) += 0.2 + rng.uniform01();
    const std::size_t extra = 1 + rng.below(3);
    for (std::size_t e = 0; e < extra; ++e) P(row, static_cast<Eigen::Index>(rng.below(T))) += rng.uniform01();
    if (i + 1 == T) {
      for (std::size_t f : first) P(row, static_cast<Eigen::Index>(f)) += 0.2 + rng.uniform01();
    } else if (rng.below(2) == 0) {
      const std::size_t k = rng.below(first.size());
      P(row, static_cast<Eigen::Index>(first[k])) += rng.uniform01();
    }
    P.row(row) /= P.row(row).sum();
  }
  return TransitionMatrix::from_dense(P);
}

std::vector<Eigen::VectorXd> enumerate_vertices(const Eigen::MatrixXd& V) {
  const auto n = static_cast<std::size_t>(V.rows());
  const auto k = static_cast<std::size_t>(V.cols());
  std::vector<Eigen::VectorXd> vertices;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  auto seen = [&](const Eigen::VectorXd& x) {
    return std::any_of(vertices.begin(), vertices.end(),
                       [&](const Eigen::VectorXd& v) { return (v - x).cwiseAbs().maxCoeff() < 1e-9; });
  };
  while (true) {
    Eigen::MatrixXd VI(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t a = 0; a < k; ++a) VI.row(static_cast<Eigen::Index>(a)) = V.row(static_cast<Eigen::Index>(idx[a]));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(VI);
    lu.setThreshold(1e-10);
    if (lu.isInvertible()) {
      for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
        Eigen::VectorXd s(static_cast<Eigen::Index>(k));
        for (std::size_t a = 0; a < k; ++a) s(static_cast<Eigen::Index>(a)) = (mask >> a) & 1U ? -1.0 : 1.0;
        const Eigen::VectorXd x = V * lu.solve(s);
        if (x.cwiseAbs().maxCoeff() <= 1.0 + 1e-9 && !seen(x)) vertices.push_back(x);
      }
    }
    // Next k-subset in lexicographic order.
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t a = pos; a < k; ++a) idx[a] = idx[a - 1] + 1;
  }
  return vertices;
}

CriterionResult verify_isit_grid(const VerifyOptions&) {
  return timed(1, "ISIT error guarantee", [] {
    const auto cells = isit_cells();
    const auto check = exact_errors(isit_cases(cells), /*strict_less=*/true);
    Outcome o;
    o.passed = check.failures == 0;
    o.detail = std::to_string(cells.size()) + " cells; failures " + std::to_string(check.failures) +
               "; worst pe/delta " + num(check.worst) + " at " + check.worst_label;
    return o;
  });
}

CriterionResult verify_start_state(const VerifyOptions&) {
  return timed(2, "start-state range", [] {
    const std::size_t Ns[] = {4, 5, 7, 10, 20, 50, 100, 280, 1000, 5000};
    std::size_t points = 0, failures = 0;
    for (std::size_t N : Ns) {
      for (int a = 1; a <= 10; ++a) {
        const double p = 0.05 + 0.09 * (a - 1) + 0.0;
        for (int b = 1; b <= 10; ++b) {
          const double q = p * b / 11.0;
          const std::size_t s = isit_start_state(N, p, q);
          ++points;
          if (s < 2 || s > N - 1) ++failures;
        }
      }
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = std::to_string(points) + " (N,p,q) points; out of range " + std::to_string(failures);
    return o;
  });
}

CriterionResult verify_coll_bound(const VerifyOptions& opt) {
  return timed(3, "collision lower bound", [&] {
    const std::size_t count = opt.trials ? opt.trials : 1000;
    Rng rng(opt.seed, 0x636f6c6cULL);
    std::size_t failures = 0;
    double min_gap = INFINITY;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t n = 2 + i % 49;
      const double spike = std::ldexp(1.0, static_cast<int>(rng.below(5)));
      const auto p = random_distribution(n, rng, spike);
      const double tv = tv_distance(p, DiscreteDistribution::uniform(n));
      const double gap = collision_probability(p) - (1.0 + tv * tv) / static_cast<double>(n);
      min_gap = std::min(min_gap, gap);
      if (gap < -1e-12) ++failures;
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = std::to_string(count) + " distributions over n in 2..50; violations " +
               std::to_string(failures) + "; smallest slack " + num(min_gap);
    return o;
  });
}

CriterionResult verify_tester(const VerifyOptions& opt) {
  return timed(4, "mini-chain tester", [&] {
    const auto suites = minichain_suites();
    Outcome o;
    std::ostringstream d;
    for (const auto& s : suites) {
      const bool size_ok = static_cast<double>(s.tester.layout.total_states) <= s.tester.layout.size_bound;
      o.passed = o.passed && size_ok;
      d << "n=" << s.n << " S=" << s.tester.layout.total_states << " bound="
        << num(s.tester.layout.size_bound) << (size_ok ? "" : " (over)") << "; ";
    }
    const auto check = exact_errors(tester_cases(suites, opt.seed), /*strict_less=*/false);
    o.passed = o.passed && check.failures == 0;
    d << "pe>delta cases " << check.failures << "; worst pe/delta " << num(check.worst) << " at "
      << check.worst_label;
    o.detail = d.str();
    return o;
  });
}

CriterionResult verify_biased_pair(const VerifyOptions& opt) {
  return timed(5, "biased pair", [&] {
    const std::size_t count = opt.trials ? opt.trials : 1000;
    std::size_t failures = 0, total = 0;
    double min_margin = INFINITY;
    for (double eps : {0.1, 0.3, 0.6}) {
      Rng rng(opt.seed, 0x70616972ULL + static_cast<std::uint64_t>(eps * 10));
      const std::size_t n_min = static_cast<std::size_t>(std::floor(1.0 / (1.0 - eps))) + 1;
      const double threshold = 0.5 + tilde_epsilon(eps);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t n = std::max<std::size_t>(2, n_min) + rng.below(50 - std::max<std::size_t>(2, n_min) + 1);
        const auto p = random_far_distribution(n, eps, rng);
        ++total;
        const auto found = find_biased_pair(p, eps);
        if (!found || !(found->bias > threshold)) {
          ++failures;
          continue;
        }
        // Independent recomputation of the reported conditional.
        const double mass = p[0] + p[found->partner];
        const double expect = mass <= 0.0 ? 1.0
                              : found->side == PairSide::first ? p[0] / mass
                                                               : p[found->partner] / mass;
        if (std::abs(expect - found->bias) > 1e-15) ++failures;
        min_margin = std::min(min_margin, found->bias - threshold);
      }
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = std::to_string(total) + " far distributions; misses " + std::to_string(failures) +
               "; smallest margin over 1/2+eps~ " + num(min_margin);
    return o;
  });
}

CriterionResult verify_adversary(const VerifyOptions& opt) {
  return timed(6, "adversary certificates", [&] {
    const std::size_t count = opt.trials ? opt.trials : 200;
    constexpr std::size_t n = 20;
    std::size_t failures = 0;
    double worst_res = 0.0, worst_pe = 0.0, min_tv = INFINITY;
    std::string first_failure;
    auto note = [&](const std::string& what) {
      ++failures;
      if (first_failure.empty()) first_failure = what;
    };
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(opt.seed, 0x7374617469ULL + i);
      const Machine m = random_irreducible_machine(9, n, rng);
      const auto cert = confusable_distribution(m, AdversaryMode::stationary, opt.seed + i);
      const double need = (n - 1.0 - 9.0) / (2.0 * n);
      min_tv = std::min(min_tv, cert.tv);
      worst_res = std::max(worst_res, cert.residual);
      if (cert.tv < need - 1e-12) note("stationary #" + std::to_string(i) + " tv " + num(cert.tv));
      if (cert.residual > 1e-9) note("stationary #" + std::to_string(i) + " residual " + num(cert.residual));
      if (!verify_certificate(m, cert).ok) note("stationary #" + std::to_string(i) + " re-check");
      const DiscreteDistribution q(cert.q);
      const auto u = DiscreteDistribution::uniform(n);
      for (Hypothesis h : {Hypothesis::H0, Hypothesis::H1}) {
        const double gap = std::abs(error_probability(m, q, h) - error_probability(m, u, h));
        worst_pe = std::max(worst_pe, gap);
        if (gap > 1e-8) note("stationary #" + std::to_string(i) + " pe gap " + num(gap));
      }
    }
    double worst_tres = 0.0, min_ttv = INFINITY;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(opt.seed, 0x7472616e73ULL + i);
      const Machine m = random_deterministic_machine(4, n, rng);
      const auto cert = confusable_distribution(m, AdversaryMode::transition, opt.seed + i);
      min_ttv = std::min(min_ttv, cert.tv);
      worst_tres = std::max(worst_tres, cert.residual);
      if (cert.tv < (n - 1.0 - 16.0) / (2.0 * n) - 1e-12) note("transition #" + std::to_string(i) + " tv");
      if (cert.residual > 1e-10) note("transition #" + std::to_string(i) + " residual " + num(cert.residual));
      if (!verify_certificate(m, cert).ok) note("transition #" + std::to_string(i) + " re-check");
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = "stationary: min tv " + num(min_tv) + ", max residual " + num(worst_res) +
               ", max pe gap " + num(worst_pe) + "; transition: min tv " + num(min_ttv) +
               ", max residual " + num(worst_tres) + "; failures " + std::to_string(failures) +
               (first_failure.empty() ? "" : " (first: " + first_failure + ")");
    return o;
  });
}

CriterionResult verify_vertex(const VerifyOptions& opt) {
  return timed(7, "polytope vertex", [&] {
    const std::size_t count = opt.trials ? opt.trials : 100;
    std::size_t failures = 0;
    double min_excess = INFINITY;
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(opt.seed, 0x76657274ULL + i);
      const std::size_t n = 2 + rng.below(11);
      const std::size_t k = 1 + rng.below(n - 1);
      Eigen::MatrixXd G(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
      for (Eigen::Index r = 0; r < G.rows(); ++r) {
        for (Eigen::Index c = 0; c < G.cols(); ++c) G(r, c) = rng.normal();
      }
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
      const Eigen::MatrixXd V = qr.householderQ() * Eigen::MatrixXd::Identity(G.rows(), G.cols());
      const Eigen::VectorXd x = polytope_vertex(V, opt.seed + i);
      const auto vertices = enumerate_vertices(V);
      const bool listed = std::any_of(vertices.begin(), vertices.end(), [&](const Eigen::VectorXd& v) {
        return (v - x).cwiseAbs().maxCoeff() < 1e-7;
      });
      double best = 0.0;
      for (const auto& v : vertices) best = std::max(best, v.lpNorm<1>());
      const double l1 = x.lpNorm<1>();
      min_excess = std::min(min_excess, l1 - static_cast<double>(k));
      if (!listed || count_saturated(x) < k || l1 < static_cast<double>(k) - 1e-9 ||
          best < static_cast<double>(k) - 1e-9 || std::abs(x.cwiseAbs().maxCoeff() - 1.0) > 1e-12) {
        ++failures;
      }
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = std::to_string(count) + " subspaces; failures " + std::to_string(failures) +
               "; smallest ||x||_1 - k " + num(min_excess);
    return o;
  });
}

CriterionResult verify_ergodicize(const VerifyOptions& opt) {
  return timed(8, "ergodicization bounds", [&] {
    const auto corpus = absorbing_corpus(opt.seed);
    std::size_t failures = 0, non_monotone = 0;
    double worst_ratio = 0.0, worst_margin = INFINITY;
    for (const auto& P : corpus) {
      std::vector<double> errs;
      for (double M : kSlacks) {
        const auto e = ergodicize(P, 0, M);
        if (!e.changed) ++failures;
        if (!e.class_mass_bound_holds()) ++failures;
        const double margin = e.within_class_margin();
        if (margin < -1e-12) ++failures;
        worst_margin = std::min(worst_margin, margin);
        worst_ratio = std::max(worst_ratio, e.class_mass_error() * (M + 1.0));
        errs.push_back(e.class_mass_error());
      }
      for (std::size_t i = 1; i < errs.size(); ++i) {
        if (!(errs[i] < errs[i - 1] || (errs[i] <= 1e-15 && errs[i - 1] <= 1e-15))) ++non_monotone;
      }
    }
    Outcome o;
    o.passed = failures == 0 && non_monotone == 0;
    o.detail = std::to_string(corpus.size()) + " chains x M in {10,100,1000}; bound failures " +
               std::to_string(failures) + "; non-monotone " + std::to_string(non_monotone) +
               "; max (M+1)|pi(R)-Pr| " + num(worst_ratio) + "; min within-class margin " +
               num(worst_margin);
    return o;
  });
}

namespace {

// Every irreducible chain criterion 9 covers: random ones plus the class
// restrictions produced while checking criterion 8.
std::vector<TransitionMatrix> irreducible_corpus(std::uint64_t seed) {
  std::vector<TransitionMatrix> out;
  Rng rng(seed, 0x6b6163ULL);
  for (int i = 0; i < 50; ++i) out.push_back(random_irreducible_chain(2 + rng.below(39), rng));
  for (const auto& P : absorbing_corpus(seed)) {
    const auto dec = classify(P);
    for (const auto& cls : dec.classes) out.push_back(restrict_to_class(P, cls));
    for (double M : kSlacks) {
      const auto e = ergodicize(P, 0, M);
      const auto d = classify(e.result);
      out.push_back(restrict_to_class(e.result, d.classes[static_cast<std::size_t>(d.class_of[0])]));
    }
  }
  return out;
}

}  // namespace

CriterionResult verify_kac(const VerifyOptions& opt) {
  return timed(9, "Kac return times", [&] {
    const auto corpus = irreducible_corpus(opt.seed);
    double worst = 0.0;
    for (const auto& P : corpus) worst = std::max(worst, kac_check(P));
    Outcome o;
    o.passed = worst <= 1e-8;
    o.detail = std::to_string(corpus.size()) + " chains; max |pi_i E[tau_i] - 1| " + num(worst);
    return o;
  });
}

CriterionResult verify_flow_balance(const VerifyOptions& opt) {
  return timed(9, "flow balance", [&] {
    const auto corpus = irreducible_corpus(opt.seed);
    Rng rng(opt.seed, 0x666c6f77ULL);
    double worst = 0.0;
    std::size_t cuts = 0;
    for (const auto& P : corpus) {
      for (int c = 0; c < 6; ++c) {
        std::vector<StateIndex> cut;
        for (StateIndex s = 0; s < P.size(); ++s) {
          if (c == 0 || rng.below(2) == 0) cut.push_back(s);
        }
        worst = std::max(worst, flow_balance_check(P, cut));
        ++cuts;
      }
    }
    Outcome o;
    o.passed = worst <= 1e-8;
    o.detail = std::to_string(cuts) + " cuts over " + std::to_string(corpus.size()) +
               " chains; max flow imbalance " + num(worst);
    return o;
  });
}

CriterionResult verify_kac_flow(const VerifyOptions& opt) {
  const auto kac = verify_kac(opt);
  const auto flow = verify_flow_balance(opt);
  CriterionResult r;
  r.id = 9;
  r.name = "Kac and flow balance";
  r.passed = kac.passed && flow.passed;
  r.detail = kac.detail + "; " + flow.detail;
  r.seconds = kac.seconds + flow.seconds;
  return r;
}

CriterionResult verify_paninski_pair(const VerifyOptions&) {
  return timed(10, "Paninski pair tester", [] {
    const auto suites = pair_suites();
    Outcome o;
    std::ostringstream d;
    d << "states";
    for (std::size_t i = 0; i < suites.size(); ++i) {
      const auto S = suites[i].tester.machine.num_states();
      d << ' ' << S;
      if (i > 0) {
        const double ratio = static_cast<double>(S) /
                             static_cast<double>(suites[i - 1].tester.machine.num_states());
        if (!(ratio > 1.0 && ratio <= 2.5)) o.passed = false;
        d << " (x" << num(ratio) << ')';
      }
    }
    const auto check = exact_errors(pair_cases(suites), /*strict_less=*/false);
    o.passed = o.passed && check.failures == 0;
    d << "; pe>delta cases " << check.failures << "; worst pe/delta " << num(check.worst) << " at "
      << check.worst_label;
    o.detail = d.str();
    return o;
  });
}

CriterionResult verify_reduction(const VerifyOptions& opt) {
  return timed(11, "binary reduction", [&] {
    constexpr std::size_t n = 4;
    constexpr double eps = 0.3, delta = 0.2;
    const std::size_t trials = opt.trials ? opt.trials : 10000;
    const auto tester = build_minichain_tester(n, eps, delta);
    const BinaryReduction reduction(n);
    const Machine wrapped = reduction.wrap(tester.machine);
    Outcome o;
    std::ostringstream d;
    const double se = std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
    int which = 0;
    for (double theta : {0.5, (1.0 - eps) / 2.0}) {
      const Hypothesis truth = theta == 0.5 ? Hypothesis::H0 : Hypothesis::H1;
      const auto law = reduction.symbol_law(theta);
      // The wrapped bit machine and the tester under the symbol law induce the
      // same chain.
      const auto a = induced_matrix(wrapped, bernoulli(theta)).dense();
      const auto b = induced_matrix(tester.machine, law).dense();
      const double gap = (a - b).cwiseAbs().maxCoeff();
      SimConfig cfg;
      cfg.trials = trials;
      cfg.seed = opt.seed + static_cast<std::uint64_t>(which++);
      cfg.threads = opt.threads;
      cfg.max_steps = default_horizon(tester.machine, law);
      const auto r = simulate_chains(tester.machine, tester.layout, law, truth, cfg);
      const bool ok = gap <= 1e-12 && r.error_rate <= delta + 4.0 * se;
      o.passed = o.passed && ok;
      d << "theta=" << num(theta) << ": pe_hat " << num(r.error_rate) << " (limit "
        << num(delta + 4.0 * se) << "), unabsorbed " << num(r.frac_unabsorbed)
        << ", chain gap " << num(gap) << "; ";
    }
    o.detail = d.str();
    return o;
  });
}

CriterionResult verify_agreement(const VerifyOptions& opt) {
  return timed(12, "simulation agrees with exact", [&] {
    const std::size_t trials = opt.trials ? opt.trials : 100000;
    const auto cells = isit_cells();
    const auto suites = minichain_suites();
    const auto pairs = pair_suites();
    std::vector<Case> cases = isit_cases(cells);
    for (auto& c : tester_cases(suites, opt.seed)) cases.push_back(std::move(c));
    for (auto& c : pair_cases(pairs)) cases.push_back(std::move(c));

    std::size_t failures = 0;
    double worst_z = 0.0;
    std::string worst;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      const auto a = analyze(*c.machine, c.source);
      const double exact = error_probability(a, c.machine->decisions(), c.truth);
      SimConfig cfg;
      cfg.trials = trials;
      cfg.seed = opt.seed + i;
      cfg.threads = opt.threads;
      cfg.max_steps = std::max(1.0, 50.0 * a.mean_absorption_time);
      const auto r = simulate_chains(*c.machine, *c.layout, c.source, c.truth, cfg);
      const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(trials));
      const double diff = std::abs(r.error_rate - exact);
      const double z = se > 0.0 ? diff / se : (diff > 0.0 ? INFINITY : 0.0);
      if (z > 4.0) ++failures;
      if (z > worst_z) {
        worst_z = z;
        worst = c.label + " exact " + num(exact) + " sim " + num(r.error_rate);
      }
    }
    Outcome o;
    o.passed = failures == 0;
    o.detail = std::to_string(cases.size()) + " (machine, source) pairs at " + std::to_string(trials) +
               " trials; beyond 4 SE " + std::to_string(failures) + "; worst |z| " + num(worst_z) +
               (worst.empty() ? "" : " (" + worst + ")");
    return o;
  });
}

std::vector<CriterionResult> verify_all(const VerifyOptions& o) {
  return {verify_isit_grid(o), verify_start_state(o), verify_coll_bound(o), verify_tester(o),
          verify_biased_pair(o), verify_adversary(o), verify_vertex(o), verify_ergodicize(o),
          verify_kac_flow(o), verify_paninski_pair(o), verify_reduction(o), verify_agreement(o)};
}

std::string format_result(const CriterionResult& r) {
  char head[96];
  std::snprintf(head, sizeof head, "%s %2d  %-30s (%.2f s)  ", r.passed ? "PASS" : "FAIL", r.id,
                r.name.c_str(), r.seconds);
  return head + r.detail;
}

}  // namespace memtest
