#include "memtest/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include "memtest/adversary.hpp"
#include "memtest/errors.hpp"
#include "memtest/markov.hpp"

namespace memtest {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
// Sums of at most this many i.i.d. terms are drawn exactly; longer sums use a
// moment-matched normal.
constexpr double kExactSumLimit = 32.0;

struct TrialOutcome {
  bool wrong = false;
  bool absorbed = false;
  double absorb_time = 0.0;
  double cesaro = 0.0;
  std::vector<double> snapshots;
};

void check_config(const SimConfig& cfg) {
  if (cfg.trials < 1) throw InputError("trials must be at least 1");
  if (!(cfg.max_steps >= 1.0)) throw InputError("max_steps must be at least 1");
}

std::vector<double> snapshot_times(double horizon) {
  std::vector<double> t;
  for (int k = 0; k < 63 && std::ldexp(1.0, k) <= horizon; ++k) t.push_back(std::ldexp(1.0, k));
  return t;
}

template <class F>
std::vector<TrialOutcome> run_trials(std::size_t trials, std::size_t threads, F&& fn) {
  std::vector<TrialOutcome> out(trials);
  const std::size_t workers = std::min(worker_count(threads), trials);
  if (workers <= 1) {
    for (std::size_t t = 0; t < trials; ++t) out[t] = fn(t);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < trials; t = next++) out[t] = fn(t);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

SimReport aggregate(std::string engine, const std::vector<TrialOutcome>& trials, double horizon,
                    Hypothesis truth, const std::vector<double>& snap_t) {
  SimReport r;
  r.engine = std::move(engine);
  r.trials = trials.size();
  r.horizon = horizon;
  r.truth = truth;
  std::vector<double> times;
  double mean = 0.0, cesaro = 0.0;
  std::vector<double> snaps(snap_t.size(), 0.0);
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (t.wrong) ++r.errors;
    if (t.absorbed) {
      times.push_back(t.absorb_time);
      mean += (t.absorb_time - mean) / static_cast<double>(times.size());
    }
    cesaro += (t.cesaro - cesaro) / static_cast<double>(i + 1);
    for (std::size_t k = 0; k < snaps.size(); ++k) {
      snaps[k] += (t.snapshots[k] - snaps[k]) / static_cast<double>(i + 1);
    }
  }
  const double n = static_cast<double>(r.trials);
  r.error_rate = static_cast<double>(r.errors) / n;
  const auto ci = wilson_interval(r.errors, r.trials);
  r.ci_lo = ci.lo;
  r.ci_hi = ci.hi;
  r.absorbed = times.size();
  r.frac_unabsorbed = static_cast<double>(r.trials - r.absorbed) / n;
  r.mean_absorption_time = times.empty() ? kNaN : mean;
  if (times.empty()) {
    r.median_absorption_time = kNaN;
  } else {
    std::sort(times.begin(), times.end());
    const std::size_t h = times.size() / 2;
    r.median_absorption_time = times.size() % 2 == 1 ? times[h] : 0.5 * (times[h - 1] + times[h]);
  }
  r.cesaro_error = cesaro;
  for (std::size_t k = 0; k < snaps.size(); ++k) r.snapshots.push_back({snap_t[k], snaps[k]});
  return r;
}

// Length of a run that stopped short of m: P(len = j) ∝ r^(j-1), 1 <= j <= m-1.
struct ShortRun {
  double r = 0.0;
  double m = 0.0;
  double log_r = 0.0;
  double tail = 0.0;  // r^(m-1)
  double mean = 0.0;
  double var = 0.0;

  ShortRun() = default;
  ShortRun(double r_, std::size_t m_) : r(r_), m(static_cast<double>(m_)) {
    if (m_ < 2) return;
    log_r = r > 0.0 ? std::log(r) : -kInf;
    tail = std::pow(r, m - 1.0);
    double w = 1.0, total = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 1; j < m_; ++j) {
      const double jd = static_cast<double>(j);
      total += w;
      s1 += w * jd;
      s2 += w * jd * jd;
      w *= r;
      if (w < 1e-300 * total) break;
    }
    mean = s1 / total;
    var = std::max(0.0, s2 / total - mean * mean);
  }

  double sample(Rng& rng) const {
    if (r <= 0.0) return 1.0;
    const double u = rng.uniform01();
    const double j = std::ceil(std::log1p(-u * (1.0 - tail)) / log_r);
    return std::clamp(j, 1.0, m - 1.0);
  }

  double sum(double count, Rng& rng) const {
    if (count <= 0.0) return 0.0;
    if (count <= kExactSumLimit) {
      double s = 0.0;
      for (int i = 0; i < static_cast<int>(count); ++i) s += sample(rng);
      return s;
    }
    return std::max(count, count * mean + std::sqrt(count * var) * rng.normal());
  }
};

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Exit and duration of one chain when its watched symbols are Bernoulli(theta)
// ones and arrive with probability w per step.
class ChainRunSampler {
 public:
  ChainRunSampler(const ChainRecord& chain, const DiscreteDistribution& source)
      : a_(chain.isit.N - chain.isit.start), b_(chain.isit.start - 1) {
    w_ = chain.watch.watched_mass(source);
    if (w_ <= 0.0) return;
    theta_ = chain.watch.one_probability(source);
    if (theta_ <= 0.0 || theta_ >= 1.0) return;
    const double la = static_cast<double>(a_ - 1) * std::log(theta_);
    const double lb = static_cast<double>(b_ - 1) * std::log1p(-theta_);
    alpha_ = std::exp(la);
    beta_ = std::exp(lb);
    // c = alpha + beta (1 - alpha): a cycle (ones-run then zeros-run) ends the chain.
    log_c_ = log_add(la, lb + std::log1p(-alpha_));
    high_given_end_ = std::exp(la - log_c_);
    ones_ = ShortRun(theta_, a_);
    zeros_ = ShortRun(1.0 - theta_, b_);
  }

  bool stuck() const { return w_ <= 0.0; }

  /// (exits high, symbols consumed).
  std::pair<bool, double> sample(Rng& rng) const {
    const auto [high, watched] = sample_watched(rng);
    return {high, watched + unwatched(watched, rng)};
  }

 private:
  std::pair<bool, double> sample_watched(Rng& rng) const {
    const double a = static_cast<double>(a_), b = static_cast<double>(b_);
    if (theta_ >= 1.0) return {true, a};
    if (theta_ <= 0.0) return {false, b};
    double watched = 0.0;
    if (rng.uniform01() >= theta_) {  // the first run is a zeros-run
      if (rng.uniform01() < beta_) return {false, b};
      watched += zeros_.sample(rng);
    }
    const double c = std::exp(log_c_);
    double cycles;
    if (c >= 1.0) {
      cycles = 0.0;
    } else if (c > 0.0) {
      cycles = std::floor(std::log(rng.uniform_open01()) / std::log1p(-c));
    } else {
      cycles = std::floor(-std::log(rng.uniform_open01()) * std::exp(-log_c_));
    }
    if (!std::isfinite(cycles)) return {false, kInf};
    watched += ones_.sum(cycles, rng) + zeros_.sum(cycles, rng);
    if (rng.uniform01() < high_given_end_) return {true, watched + a};
    return {false, watched + ones_.sample(rng) + b};
  }

  // Unwatched symbols interleaved with `watched` watched ones.
  double unwatched(double watched, Rng& rng) const {
    if (w_ >= 1.0 || !std::isfinite(watched)) return 0.0;
    if (watched <= kExactSumLimit) {
      const double lq = std::log1p(-w_);
      double s = 0.0;
      for (int i = 0; i < static_cast<int>(watched); ++i) {
        s += std::floor(std::log(rng.uniform_open01()) / lq);
      }
      return s;
    }
    const double mean = watched * (1.0 - w_) / w_;
    const double sd = std::sqrt(watched * (1.0 - w_)) / w_;
    return std::max(0.0, mean + sd * rng.normal());
  }

  std::size_t a_, b_;
  double w_ = 0.0;
  double theta_ = 0.0;
  double alpha_ = 0.0, beta_ = 0.0;
  double log_c_ = 0.0;
  double high_given_end_ = 0.0;
  ShortRun ones_, zeros_;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double center = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, std::min(p, center - half)), std::min(1.0, std::max(p, center + half))};
}

SymbolSampler::SymbolSampler(const DiscreteDistribution& p) {
  double acc = 0.0;
  for (Symbol x = 0; x < p.size(); ++x) {
    if (p[x] <= 0.0) continue;
    acc += p[x];
    cdf_.push_back(acc);
    support_.push_back(x);
  }
  cdf_.back() = std::numeric_limits<double>::infinity();
}

Symbol SymbolSampler::operator()(Rng& rng) const {
  if (support_.size() == 1) return support_.front();
  const double u = rng.uniform01();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return support_[static_cast<std::size_t>(it - cdf_.begin())];
}

std::vector<Symbol> sample_stream(const DiscreteDistribution& p, std::size_t len, Rng& rng) {
  const SymbolSampler sampler(p);
  std::vector<Symbol> out(len);
  for (auto& x : out) x = sampler(rng);
  return out;
}

std::size_t worker_count(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MEMTEST_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

double default_horizon(const Machine& m, const DiscreteDistribution& source) {
  const auto a = analyze(m, source);
  // Entering a recurrent class is almost sure on a finite chain, so an
  // infinite mean only means it overflowed.
  return std::max(1.0, 50.0 * a.mean_absorption_time);
}

SimReport simulate(const Machine& m, const DiscreteDistribution& source, Hypothesis truth,
                   const SimConfig& cfg) {
  check_config(cfg);
  if (source.size() != m.alphabet_size()) throw InputError("source alphabet differs from machine");
  const double horizon = std::floor(std::min(cfg.max_steps, kStreamHorizonCap));
  const auto H = static_cast<std::uint64_t>(horizon);
  const SymbolSampler sampler(source);
  std::vector<char> absorbing(m.num_states()), wrong(m.num_states());
  for (StateIndex s = 0; s < m.num_states(); ++s) {
    absorbing[s] = m.is_absorbing(s);
    wrong[s] = m.decision(s) != truth;
  }
  const auto snap_t = snapshot_times(horizon);
  const Rng root(cfg.seed);

  auto trial = [&](std::size_t index) {
    Rng rng = root.fork(index);
    TrialOutcome out;
    out.snapshots.reserve(snap_t.size());
    StateIndex state = m.init();
    double wrong_steps = 0.0;
    std::size_t next_snap = 0;
    std::uint64_t t = 0;
    if (!absorbing[state]) {
      while (t < H) {
        state = step(m, state, sampler(rng), rng);
        ++t;
        wrong_steps += wrong[state];
        if (next_snap < snap_t.size() && static_cast<double>(t) == snap_t[next_snap]) {
          out.snapshots.push_back(wrong_steps / static_cast<double>(t));
          ++next_snap;
        }
        if (absorbing[state]) break;
      }
    }
    out.absorbed = absorbing[state];
    out.absorb_time = static_cast<double>(t);
    out.wrong = wrong[state];
    // Past absorption (or the horizon) the decision is frozen.
    const double tail = wrong[state];
    for (; next_snap < snap_t.size(); ++next_snap) {
      const double s = snap_t[next_snap];
      out.snapshots.push_back((wrong_steps + (s - static_cast<double>(t)) * tail) / s);
    }
    out.cesaro = (wrong_steps + (horizon - static_cast<double>(t)) * tail) / horizon;
    return out;
  };
  return aggregate("stream", run_trials(cfg.trials, cfg.threads, trial), horizon, truth, snap_t);
}

SimReport simulate_chains(const Machine& m, const TesterLayout& layout,
                          const DiscreteDistribution& source, Hypothesis truth,
                          const SimConfig& cfg) {
  check_config(cfg);
  if (source.size() != m.alphabet_size()) throw InputError("source alphabet differs from machine");
  validate_layout(m, layout);
  const Hypothesis interior = m.decision(layout.chains.front().start_state());
  for (const auto& c : layout.chains) {
    for (std::size_t i = 2; i < c.isit.N; ++i) {
      if (m.decision(c.state_of(i)) != interior) {
        throw InputError("run engine needs every chain state to carry the same decision");
      }
    }
  }
  std::vector<ChainRunSampler> samplers;
  for (const auto& c : layout.chains) samplers.emplace_back(c, source);

  const double horizon = cfg.max_steps;
  const auto snap_t = snapshot_times(horizon);
  const Rng root(cfg.seed);
  const double wrong_inside = interior != truth;

  auto trial = [&](std::size_t index) {
    Rng rng = root.fork(index);
    TrialOutcome out;
    double t = 0.0;
    std::optional<StateIndex> terminal;
    for (std::size_t j = 0; j < samplers.size();) {
      if (samplers[j].stuck()) {
        t = kInf;
        break;
      }
      const auto [high, steps] = samplers[j].sample(rng);
      t += steps;
      if (!(t <= horizon)) break;
      const ChainExit& exit = high ? layout.chains[j].high_exit : layout.chains[j].low_exit;
      if (exit.next_chain) {
        ++j;
      } else {
        terminal = exit.state;
        break;
      }
    }
    out.absorbed = terminal && t <= horizon;
    const double wrong_after = out.absorbed ? (m.decision(*terminal) != truth) : wrong_inside;
    out.wrong = wrong_after != 0.0;
    out.absorb_time = out.absorbed ? t : horizon;
    // Steps 1..tau-1 sit inside the chains, steps tau..t in the terminal.
    auto cesaro_at = [&](double s) {
      if (!out.absorbed || s < t) return wrong_inside;
      if (!std::isfinite(s)) return wrong_after;
      return ((t - 1.0) * wrong_inside + (s - t + 1.0) * wrong_after) / s;
    };
    for (double s : snap_t) out.snapshots.push_back(cesaro_at(s));
    out.cesaro = cesaro_at(horizon);
    return out;
  };
  return aggregate("runs", run_trials(cfg.trials, cfg.threads, trial), horizon, truth, snap_t);
}

Sweep sample_complexity_sweep(const std::vector<SweepCell>& cells, const SimConfig& cfg) {
  Sweep sweep;
  for (const auto& cell : cells) {
    SweepRow row;
    row.cell = cell;
    std::optional<DiscreteDistribution> source;
    Hypothesis truth = Hypothesis::H0;
    if (cell.source == "uniform") {
      source.emplace(DiscreteDistribution::uniform(cell.n));
    } else if (cell.source == "paninski") {
      source.emplace(paninski(cell.n, cell.eps, std::vector<int>(cell.n / 2, 1)));
      truth = Hypothesis::H1;
    } else {
      throw InputError("unknown sweep source \"" + cell.source + "\"");
    }
    std::optional<Machine> machine;
    std::optional<TesterLayout> layout;
    if (cell.construction == "quadratic") {
      machine.emplace(build_quadratic_tester(cell.n, cell.eps, cell.delta).machine);
    } else if (cell.construction == "minichain") {
      auto t = build_minichain_tester(cell.n, cell.eps, cell.delta);
      machine.emplace(std::move(t.machine));
      layout.emplace(std::move(t.layout));
    } else if (cell.construction == "paninski-pair") {
      auto t = build_paninski_pair_tester(cell.eps, cell.delta, cell.n);
      machine.emplace(std::move(t.machine));
      layout.emplace(std::move(t.layout));
    } else {
      throw InputError("unknown sweep construction \"" + cell.construction + "\"");
    }
    row.states = machine->num_states();
    const auto a = analyze(*machine, *source);
    row.exact_mean_time = a.mean_absorption_time;
    row.exact_error = error_probability(a, machine->decisions(), truth);
    SimConfig c = cfg;
    if (layout) {
      c.max_steps = std::isfinite(row.exact_mean_time) ? std::max(1.0, 50.0 * row.exact_mean_time)
                                                       : cfg.max_steps;
      row.report = simulate_chains(*machine, *layout, *source, truth, c);
    } else {
      row.report = simulate(*machine, *source, truth, c);
    }
    sweep.rows.push_back(std::move(row));
  }

  std::map<std::tuple<std::string, double, double, std::string>, std::vector<const SweepRow*>> groups;
  for (const auto& r : sweep.rows) {
    groups[{r.cell.construction, r.cell.eps, r.cell.delta, r.cell.source}].push_back(&r);
  }
  for (auto& [key, rows] : groups) {
    std::sort(rows.begin(), rows.end(), [](auto* x, auto* y) { return x->cell.n < y->cell.n; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i]->cell.n > rows[i - 1]->cell.n &&
          !(rows[i]->exact_mean_time > rows[i - 1]->exact_mean_time)) {
        sweep.monotone_in_n = false;
      }
    }
  }
  return sweep;
}

Json report_to_json(const SimReport& r) {
  Json snaps = Json::array();
  for (const auto& s : r.snapshots) snaps.push_back({{"t", s.t}, {"cesaro_error", s.cesaro_error}});
  return {{"engine", r.engine},
          {"trials", r.trials},
          {"horizon", r.horizon},
          {"truth", r.truth == Hypothesis::H1 ? "H1" : "H0"},
          {"errors", r.errors},
          {"pe_hat", r.error_rate},
          {"ci_lo", r.ci_lo},
          {"ci_hi", r.ci_hi},
          {"absorbed", r.absorbed},
          {"mean_abs_time", r.mean_absorption_time},
          {"median_abs_time", r.median_absorption_time},
          {"frac_unabsorbed", r.frac_unabsorbed},
          {"cesaro_error", r.cesaro_error},
          {"snapshots", snaps}};
}

std::string sweep_csv(const Sweep& sweep) {
  std::ostringstream out;
  out << "construction,n,eps,delta,source,states,engine,trials,horizon,"
         "pe_hat,ci_lo,ci_hi,mean_abs_time,frac_unabsorbed,exact_pe,exact_mean_abs_time\n";
  for (const auto& r : sweep.rows) {
    out << r.cell.construction << ',' << r.cell.n << ',' << fmt(r.cell.eps) << ','
        << fmt(r.cell.delta) << ',' << r.cell.source << ',' << r.states << ',' << r.report.engine
        << ',' << r.report.trials << ',' << fmt(r.report.horizon) << ','
        << fmt(r.report.error_rate) << ',' << fmt(r.report.ci_lo) << ',' << fmt(r.report.ci_hi)
        << ',' << fmt(r.report.mean_absorption_time) << ',' << fmt(r.report.frac_unabsorbed)
        << ',' << fmt(r.exact_error) << ',' << fmt(r.exact_mean_time) << '\n';
  }
  return out.str();
}

Json sweep_to_json(const Sweep& sweep) {
  Json rows = Json::array();
  for (const auto& r : sweep.rows) {
    Json row = report_to_json(r.report);
    row.erase("snapshots");
    row["construction"] = r.cell.construction;
    row["n"] = r.cell.n;
    row["eps"] = r.cell.eps;
    row["delta"] = r.cell.delta;
    row["source"] = r.cell.source;
    row["states"] = r.states;
    row["exact_pe"] = r.exact_error;
    row["exact_mean_abs_time"] = r.exact_mean_time;
    rows.push_back(row);
  }
  return {{"rows", rows}, {"monotone_in_n", sweep.monotone_in_n}};
}

}  // namespace memtest
