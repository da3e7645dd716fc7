// memtest: build, analyze, simulate and attack finite-state uniformity testers.
// Every state and symbol index in files and on the command line is 1-based.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "memtest/adversary.hpp"
#include "memtest/constructions.hpp"
#include "memtest/errors.hpp"
#include "memtest/io.hpp"
#include "memtest/markov.hpp"
#include "memtest/simulate.hpp"
#include "memtest/verify.hpp"

namespace fs = std::filesystem;
using namespace memtest;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Flags {
  std::size_t n = 4;
  double eps = 0.5;
  double delta = 0.1;
  std::size_t N = 0;
  double p = 0.0;
  double q = 0.0;
  double K = 0.0;
  std::string mode = "stationary";
  std::size_t trials = 0;
  double max_steps = 0.0;
  std::uint64_t seed = 1;
  double slack = 0.0;
  std::string out;
  std::string format = "json";
  std::string machine;
  std::string layout;
  std::string dist;
  std::string truth;
  std::string engine = "auto";
  std::string z;
  std::string cert;
  std::string sweep;
  std::string ns = "2,4,8";
};

fs::path layout_path_for(const fs::path& machine) {
  fs::path p = machine;
  p.replace_extension(".layout.json");
  return p;
}

void emit(const Json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(1) << '\n';
  } else {
    write_json_file(out, j);
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

std::vector<int> parse_signs(const std::string& text, std::size_t count) {
  std::vector<int> z;
  for (const auto& part : split(text, ',')) z.push_back(std::stoi(part));
  if (z.size() != count) throw InputError("--z needs n/2 comma-separated signs");
  return z;
}

// "uniform:4", "paninski:4:0.5[:+1,-1]", "bern:0.3" or a distribution file.
DiscreteDistribution parse_source(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.empty()) throw InputError("empty --dist");
  if (parts[0] == "uniform" && parts.size() == 2) {
    return DiscreteDistribution::uniform(std::stoul(parts[1]));
  }
  if (parts[0] == "bern" && parts.size() == 2) {
    const double theta = std::stod(parts[1]);
    return DiscreteDistribution({1.0 - theta, theta});
  }
  if (parts[0] == "paninski" && (parts.size() == 3 || parts.size() == 4)) {
    const std::size_t n = std::stoul(parts[1]);
    const std::vector<int> z = parts.size() == 4 ? parse_signs(parts[3], n / 2)
                                                 : std::vector<int>(n / 2, 1);
    return paninski(n, std::stod(parts[2]), z);
  }
  if (fs::exists(text)) return distribution_from_json(read_json_file(text));
  throw InputError("cannot interpret --dist \"" + text + "\"");
}

Hypothesis parse_truth(const std::string& s, const DiscreteDistribution& source, double eps) {
  if (s == "H0") return Hypothesis::H0;
  if (s == "H1") return Hypothesis::H1;
  if (!s.empty()) throw InputError("--truth must be H0 or H1");
  // Default: H0 only for the uniform source.
  return tv_distance(source, DiscreteDistribution::uniform(source.size())) <= eps * 1e-9
             ? Hypothesis::H0
             : Hypothesis::H1;
}

void save_machine(const Machine& m, const std::optional<TesterLayout>& layout, const std::string& out) {
  if (out.empty()) {
    Json j = machine_to_json(m);
    if (layout) j["layout"] = layout_to_json(*layout);
    std::cout << j.dump() << '\n';
    return;
  }
  write_json_file(out, machine_to_json(m));
  if (layout) write_json_file(layout_path_for(out), layout_to_json(*layout));
}

void print_summary(const Machine& m, const std::optional<TesterLayout>& layout, const std::string& out) {
  if (out.empty()) return;
  std::cerr << "states " << m.num_states();
  if (layout && layout->size_bound > 0) std::cerr << "  bound " << layout->size_bound;
  std::cerr << "  hash " << machine_hash(m) << "  -> " << out;
  if (layout) std::cerr << " (+ " << layout_path_for(out).string() << ")";
  std::cerr << '\n';
}

int run_build(const std::string& kind, const Flags& f) {
  std::optional<Machine> m;
  std::optional<TesterLayout> layout;
  if (kind == "isit") {
    std::size_t N = f.N;
    double q = f.q;
    if (f.K > 0) {
      if (N == 0) N = isit_size(f.delta, f.p, f.K);
      if (q == 0.0) q = f.p - 1.0 / f.K;
    }
    if (N == 0 || f.p <= 0.0 || q <= 0.0) {
      throw InputError("build isit needs --p with --N and --q, or --p, --K and --delta");
    }
    auto isit = build_isit(N, f.p, q);
    m.emplace(std::move(isit.machine));
    layout.emplace(std::move(isit.layout));
  } else if (kind == "collision") {
    m.emplace(build_collision_machine(f.n).machine);
  } else if (kind == "quadratic") {
    m.emplace(build_quadratic_tester(f.n, f.eps, f.delta).machine);
  } else if (kind == "tester") {
    auto t = build_minichain_tester(f.n, f.eps, f.delta);
    m.emplace(std::move(t.machine));
    layout.emplace(std::move(t.layout));
    std::cout << "total states " << layout->total_states << "\nsize bound "
              << layout->size_bound << '\n';
  } else if (kind == "paninski-pair") {
    auto t = build_paninski_pair_tester(f.eps, f.delta, f.n);
    m.emplace(std::move(t.machine));
    layout.emplace(std::move(t.layout));
  }
  save_machine(*m, layout, f.out);
  print_summary(*m, layout, f.out);
  return kOk;
}

int run_dist(const std::string& kind, const Flags& f) {
  std::optional<DiscreteDistribution> p;
  if (kind == "uniform") {
    p.emplace(DiscreteDistribution::uniform(f.n));
  } else if (kind == "paninski") {
    std::vector<int> z(f.n / 2, 1);
    if (!f.z.empty()) {
      z = parse_signs(f.z, f.n / 2);
    } else if (f.seed != 0) {
      Rng rng(f.seed, 0x7a);
      for (auto& s : z) s = rng.below(2) ? -1 : 1;
    }
    p.emplace(paninski(f.n, f.eps, z));
  } else {
    Rng rng(f.seed, 0x666172);
    p.emplace(random_far_distribution(f.n, f.eps, rng));
  }
  emit(distribution_to_json(*p), f.out);
  return kOk;
}

Machine load_machine(const Flags& f) {
  if (f.machine.empty()) throw InputError("--machine is required");
  return machine_from_json(read_json_file(f.machine));
}

std::optional<TesterLayout> load_layout(const Flags& f) {
  fs::path path = f.layout;
  if (path.empty() && !f.machine.empty()) path = layout_path_for(f.machine);
  if (path.empty() || !fs::exists(path)) {
    if (!f.layout.empty()) throw InputError("cannot open layout " + f.layout);
    return std::nullopt;
  }
  return layout_from_json(read_json_file(path));
}

int run_analyze(const Flags& f) {
  const Machine m = load_machine(f);
  const DiscreteDistribution p = parse_source(f.dist);
  const TransitionMatrix P = induced_matrix(m, p);
  const auto a = analyze(P, m.init());
  Json j = analysis_to_json(a, m.decisions());
  j["machine_hash"] = machine_hash(m);
  if (f.slack > 0.0) {
    const auto e = ergodicize(P, m.init(), f.slack);
    j["ergodicized"] = {{"changed", e.changed},
                        {"notice", e.notice},
                        {"slack", e.slack},
                        {"mixing_bound", e.mixing_bound},
                        {"connect_prob", e.connect_prob},
                        {"class_mass", e.class_mass},
                        {"class_mass_error", e.class_mass_error()},
                        {"class_mass_bound_holds", e.class_mass_bound_holds()},
                        {"within_class_margin", e.within_class_margin()}};
  }
  emit(j, f.out);
  return kOk;
}

int run_simulate(const Flags& f) {
  SimConfig cfg;
  cfg.trials = f.trials ? f.trials : 1000;
  cfg.seed = f.seed;
  if (!f.sweep.empty()) {
    std::vector<SweepCell> cells;
    for (const auto& n : split(f.ns, ',')) {
      cells.push_back({f.sweep, std::stoul(n), f.eps, f.delta, f.dist.empty() ? "uniform" : f.dist});
    }
    cfg.max_steps = f.max_steps > 0 ? f.max_steps : 1e6;
    const Sweep sweep = sample_complexity_sweep(cells, cfg);
    const std::string text = f.format == "csv" ? sweep_csv(sweep) : sweep_to_json(sweep).dump(1) + "\n";
    if (f.out.empty()) {
      std::cout << text;
    } else {
      std::ofstream(f.out) << text;
    }
    if (!sweep.monotone_in_n) {
      std::cerr << "exact mean absorption time is not increasing in n\n";
      return kFailed;
    }
    return kOk;
  }
  const Machine m = load_machine(f);
  const DiscreteDistribution p = parse_source(f.dist);
  const Hypothesis truth = parse_truth(f.truth, p, f.eps);
  const auto layout = load_layout(f);
  std::string engine = f.engine;
  if (engine == "auto") engine = layout ? "runs" : "stream";
  cfg.max_steps = f.max_steps > 0 ? f.max_steps : default_horizon(m, p);
  SimReport r;
  if (engine == "runs") {
    if (!layout) throw InputError("--engine runs needs a layout file");
    r = simulate_chains(m, *layout, p, truth, cfg);
  } else {
    r = simulate(m, p, truth, cfg);
  }
  if (f.format == "csv") {
    std::ostringstream out;
    out << "engine,trials,horizon,truth,pe_hat,ci_lo,ci_hi,mean_abs_time,frac_unabsorbed\n"
        << r.engine << ',' << r.trials << ',' << r.horizon << ','
        << (truth == Hypothesis::H1 ? "H1" : "H0") << ',' << r.error_rate << ',' << r.ci_lo << ','
        << r.ci_hi << ',' << r.mean_absorption_time << ',' << r.frac_unabsorbed << '\n';
    if (f.out.empty()) {
      std::cout << out.str();
    } else {
      std::ofstream(f.out) << out.str();
    }
  } else {
    emit(report_to_json(r), f.out);
  }
  return kOk;
}

int run_adversary(const Flags& f) {
  const Machine m = load_machine(f);
  const auto cert = confusable_distribution(m, adversary_mode_from(f.mode), f.seed);
  emit(certificate_to_json(cert), f.out);
  return kOk;
}

int report_results(const std::vector<CriterionResult>& results, const Flags& f) {
  bool ok = true;
  Json j = Json::array();
  for (const auto& r : results) {
    ok = ok && r.passed;
    if (f.format == "json") {
      j.push_back({{"id", r.id}, {"name", r.name}, {"passed", r.passed}, {"detail", r.detail},
                   {"seconds", r.seconds}});
    } else {
      std::cout << format_result(r) << '\n';
    }
  }
  if (f.format == "json") std::cout << Json{{"passed", ok}, {"results", j}}.dump(1) << '\n';
  return ok ? kOk : kFailed;
}

int run_verify(const std::string& suite, const Flags& f) {
  VerifyOptions o;
  o.seed = f.seed;
  o.trials = f.trials;
  if (suite == "adversary" && !f.cert.empty()) {
    const Machine m = load_machine(f);
    const auto cert = certificate_from_json(read_json_file(f.cert));
    const auto check = verify_certificate(m, cert);
    CriterionResult r{6, "certificate re-check", check.ok, "", 0.0};
    r.detail = "tv " + std::to_string(check.tv) + ", residual " + std::to_string(check.residual);
    for (const auto& why : check.failures) r.detail += "; " + why;
    return report_results({r}, f);
  }
  std::vector<CriterionResult> results;
  if (suite == "isit") results.push_back(verify_isit_grid(o));
  if (suite == "start-state") results.push_back(verify_start_state(o));
  if (suite == "coll-bound") results.push_back(verify_coll_bound(o));
  if (suite == "tester") results.push_back(verify_tester(o));
  if (suite == "biased-pair") results.push_back(verify_biased_pair(o));
  if (suite == "adversary") results.push_back(verify_adversary(o));
  if (suite == "vertex") results.push_back(verify_vertex(o));
  if (suite == "ergodicize") results.push_back(verify_ergodicize(o));
  if (suite == "kac") results.push_back(verify_kac(o));
  if (suite == "flow-balance") results.push_back(verify_flow_balance(o));
  if (suite == "paninski-pair") results.push_back(verify_paninski_pair(o));
  if (suite == "reduction") results.push_back(verify_reduction(o));
  if (suite == "agreement") results.push_back(verify_agreement(o));
  if (suite == "all") results = verify_all(o);
  return report_results(results, f);
}

const char* quantity_label(TestedQuantity q) {
  switch (q) {
    case TestedQuantity::bit: return "bit";
    case TestedQuantity::marginal: return "p_1";
    case TestedQuantity::pair_first: return "p_1|{1,i}";
    case TestedQuantity::pair_second: return "p_i|{1,i}";
  }
  return "?";
}

int run_report(const Flags& f) {
  const Machine m = load_machine(f);
  const auto layout = load_layout(f);
  std::cout << "machine  S=" << m.num_states() << " n=" << m.alphabet_size() << " init="
            << m.init() + 1 << " hash=" << machine_hash(m) << '\n';
  if (!layout) {
    std::cout << "no layout\n";
    return kOk;
  }
  validate_layout(m, *layout);
  std::cout << "layout   " << layout->kind << "  n=" << layout->n << " eps=" << layout->eps
            << " delta=" << layout->delta << " tilde_eps=" << layout->tilde_eps
            << "  total=" << layout->total_states;
  if (layout->size_bound > 0) std::cout << " bound=" << layout->size_bound;
  std::cout << "\nchain  tests       i    N      p          q          start  budget      first  low->  high->\n";
  for (const auto& c : layout->chains) {
    auto target = [&](const ChainExit& e) {
      return e.next_chain ? std::string("next") : "s" + std::to_string(e.state + 1);
    };
    std::printf("%-6zu %-11s %-4zu %-6zu %-10.6g %-10.6g %-6zu %-11.4g %-6zu %-6s %s\n", c.index + 1,
                quantity_label(c.quantity), c.partner + 1, c.isit.N, c.isit.p, c.isit.q, c.isit.start,
                c.budget, c.state_of(2) + 1, target(c.low_exit).c_str(), target(c.high_exit).c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build, analyze, simulate and attack finite-state uniformity testers.\n"
               "State and symbol indices in all files are 1-based."};
  app.require_subcommand(1);
  Flags f;

  auto add_params = [&](CLI::App* c) {
    c->add_option("--n", f.n, "alphabet size")->check(CLI::PositiveNumber);
    c->add_option("--eps", f.eps, "distance parameter")->check(CLI::Range(0.0, 1.0));
    c->add_option("--delta", f.delta, "error budget")->check(CLI::Range(0.0, 0.5));
  };
  auto add_out = [&](CLI::App* c) { c->add_option("-o,--out", f.out, "output file (default stdout)"); };
  auto add_format = [&](CLI::App* c) {
    c->add_option("--format", f.format, "json or csv")->check(CLI::IsMember({"json", "csv", "text"}));
  };

  auto* build = app.add_subcommand("build", "construct a machine");
  build->require_subcommand(1);
  std::string build_kind;
  for (const char* kind : {"isit", "collision", "quadratic", "tester", "paninski-pair"}) {
    auto* c = build->add_subcommand(kind, std::string("build ") + kind);
    add_params(c);
    add_out(c);
    if (std::string(kind) == "isit") {
      c->add_option("--N", f.N, "chain length")->check(CLI::Range(std::size_t{4}, std::size_t{50000000}));
      c->add_option("--p", f.p, "upper threshold")->check(CLI::Range(0.0, 1.0));
      c->add_option("--q", f.q, "lower threshold")->check(CLI::Range(0.0, 1.0));
      c->add_option("--K", f.K, "inverse gap (sizes N with --delta)")->check(CLI::Range(2.0, 1e12));
    }
    c->callback([&build_kind, kind] { build_kind = kind; });
  }

  auto* dist = app.add_subcommand("dist", "write a distribution");
  dist->require_subcommand(1);
  std::string dist_kind;
  for (const char* kind : {"uniform", "paninski", "random-far"}) {
    auto* c = dist->add_subcommand(kind, std::string(kind) + " distribution");
    add_params(c);
    add_out(c);
    c->add_option("--seed", f.seed, "seed for random signs or draws");
    if (std::string(kind) == "paninski") c->add_option("--z", f.z, "comma-separated signs, n/2 of them");
    c->callback([&dist_kind, kind] { dist_kind = kind; });
  }

  auto* analyze_cmd = app.add_subcommand("analyze", "exact chain analysis");
  analyze_cmd->add_option("--machine", f.machine, "machine JSON")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--dist", f.dist, "uniform:N, paninski:N:EPS[:SIGNS], bern:THETA or a file")->required();
  analyze_cmd->add_option("--slack", f.slack, "also ergodicize with this M")->check(CLI::PositiveNumber);
  add_out(analyze_cmd);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo simulation");
  sim->add_option("--machine", f.machine, "machine JSON")->check(CLI::ExistingFile);
  sim->add_option("--layout", f.layout, "layout JSON (default: next to the machine)");
  sim->add_option("--dist", f.dist, "source (or sweep source: uniform|paninski)");
  sim->add_option("--truth", f.truth, "H0 or H1 (default: H0 iff the source is uniform)");
  sim->add_option("--engine", f.engine, "stream, runs or auto")->check(CLI::IsMember({"stream", "runs", "auto"}));
  sim->add_option("--trials", f.trials, "trials")->check(CLI::PositiveNumber);
  sim->add_option("--max-steps", f.max_steps, "horizon (default 50x exact mean absorption time)")->check(CLI::PositiveNumber);
  sim->add_option("--seed", f.seed, "seed");
  sim->add_option("--sweep", f.sweep, "construction to sweep over --ns")->check(CLI::IsMember({"quadratic", "minichain", "paninski-pair"}));
  sim->add_option("--ns", f.ns, "comma-separated alphabet sizes for --sweep");
  add_params(sim);
  add_out(sim);
  add_format(sim);

  auto* adv = app.add_subcommand("adversary", "synthesize a confusable distribution");
  adv->add_option("--machine", f.machine, "machine JSON")->required()->check(CLI::ExistingFile);
  adv->add_option("--mode", f.mode, "transition or stationary")->check(CLI::IsMember({"transition", "stationary"}));
  adv->add_option("--seed", f.seed, "seed for the vertex objective");
  add_out(adv);

  auto* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite;
  verify->add_option("suite", suite, "suite name")
      ->required()
      ->check(CLI::IsMember({"coll-bound", "biased-pair", "flow-balance", "kac", "ergodicize", "isit",
                             "tester", "adversary", "start-state", "vertex", "paninski-pair",
                             "reduction", "agreement", "all"}));
  verify->add_option("--trials", f.trials, "corpus size or trial count")->check(CLI::PositiveNumber);
  verify->add_option("--seed", f.seed, "seed");
  verify->add_option("--machine", f.machine, "machine for certificate re-checks")->check(CLI::ExistingFile);
  verify->add_option("--cert", f.cert, "certificate to re-check")->check(CLI::ExistingFile);
  f.format = "text";
  add_format(verify);

  auto* report = app.add_subcommand("report", "summarize a machine and its layout");
  report->add_option("--machine", f.machine, "machine JSON")->required()->check(CLI::ExistingFile);
  report->add_option("--layout", f.layout, "layout JSON (default: next to the machine)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (build->parsed()) return run_build(build_kind, f);
    if (dist->parsed()) return run_dist(dist_kind, f);
    if (analyze_cmd->parsed()) return run_analyze(f);
    if (sim->parsed()) return run_simulate(f);
    if (adv->parsed()) return run_adversary(f);
    if (verify->parsed()) return run_verify(suite, f);
    if (report->parsed()) return run_report(f);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
