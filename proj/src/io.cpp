#include "memtest/io.hpp"

#include <fstream>

#include "memtest/errors.hpp"

namespace memtest {
namespace {

std::size_t one_based(const Json& j, const char* key, std::size_t limit) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    throw InputError(std::string("missing integer field \"") + key + "\"");
  }
  const auto v = j.at(key).get<long long>();
  if (v < 1 || static_cast<std::size_t>(v) > limit) {
    throw InputError(std::string("field \"") + key + "\" out of range: " + std::to_string(v));
  }
  return static_cast<std::size_t>(v - 1);
}

std::size_t positive(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 1) {
    throw InputError(std::string("field \"") + key + "\" must be a positive integer");
  }
  return j.at(key).get<std::size_t>();
}

Json successors_to_json(const SuccessorList& list) {
  Json out = Json::array();
  for (const auto& s : list) out.push_back({{"state", s.state + 1}, {"p", s.prob}});
  return out;
}

const char* quantity_name(TestedQuantity q) {
  switch (q) {
    case TestedQuantity::bit: return "bit";
    case TestedQuantity::marginal: return "marginal";
    case TestedQuantity::pair_first: return "pair_first";
    case TestedQuantity::pair_second: return "pair_second";
  }
  return "bit";
}

TestedQuantity quantity_from(const std::string& s) {
  if (s == "bit") return TestedQuantity::bit;
  if (s == "marginal") return TestedQuantity::marginal;
  if (s == "pair_first") return TestedQuantity::pair_first;
  if (s == "pair_second") return TestedQuantity::pair_second;
  throw InputError("unknown tested quantity \"" + s + "\"");
}

Json symbols_to_json(const std::vector<Symbol>& v) {
  Json out = Json::array();
  for (Symbol x : v) out.push_back(x + 1);
  return out;
}

std::vector<Symbol> symbols_from(const Json& j) {
  std::vector<Symbol> out;
  for (const auto& x : j) {
    const auto v = x.get<long long>();
    if (v < 1) throw InputError("symbol indices are 1-based");
    out.push_back(static_cast<Symbol>(v - 1));
  }
  return out;
}

Json exit_to_json(const ChainExit& e) {
  return {{"next_chain", e.next_chain}, {"state", e.state + 1}};
}

ChainExit exit_from(const Json& j) {
  return ChainExit{j.at("next_chain").get<bool>(), j.at("state").get<StateIndex>() - 1};
}

}  // namespace

Json machine_to_json(const Machine& m) {
  Json decisions = Json::array();
  for (Hypothesis h : m.decisions()) decisions.push_back(h == Hypothesis::H1 ? 1 : 0);
  Json kernel = Json::array();
  for (StateIndex s = 0; s < m.num_states(); ++s) {
    for (Symbol x = 0; x < m.alphabet_size(); ++x) {
      const auto& next = m.kernel(s, x);
      if (next.size() == 1 && next.front().state == s) continue;
      kernel.push_back({{"from", s + 1}, {"symbol", x + 1}, {"to", successors_to_json(next)}});
    }
  }
  return {{"n", m.alphabet_size()},
          {"S", m.num_states()},
          {"init", m.init() + 1},
          {"decision", decisions},
          {"kernel", kernel}};
}

Machine machine_from_json(const Json& j) {
  try {
    const std::size_t n = positive(j, "n");
    const std::size_t S = positive(j, "S");
    Machine::Builder b(S, n);
    b.init(one_based(j, "init", S));
    const auto& dec = j.at("decision");
    if (!dec.is_array() || dec.size() != S) throw InputError("\"decision\" must list S labels");
    for (std::size_t s = 0; s < S; ++s) {
      const int d = dec[s].get<int>();
      if (d != 0 && d != 1) throw InputError("decision labels must be 0 or 1");
      b.decision(s, d == 1 ? Hypothesis::H1 : Hypothesis::H0);
    }
    if (j.contains("kernel")) {
      for (const auto& entry : j.at("kernel")) {
        const StateIndex from = one_based(entry, "from", S);
        const Symbol x = one_based(entry, "symbol", n);
        SuccessorList to;
        for (const auto& t : entry.at("to")) {
          to.push_back({one_based(t, "state", S), t.at("p").get<double>()});
        }
        b.transition(from, x, std::move(to));
      }
    }
    return std::move(b).build();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed machine JSON: ") + e.what());
  }
}

Json distribution_to_json(const DiscreteDistribution& p) {
  return {{"n", p.size()}, {"probs", std::vector<double>(p.probs().begin(), p.probs().end())}};
}

DiscreteDistribution distribution_from_json(const Json& j) {
  try {
    const std::size_t n = positive(j, "n");
    auto probs = j.at("probs").get<std::vector<double>>();
    if (probs.size() != n) throw InputError("\"probs\" must have n entries");
    return DiscreteDistribution(std::move(probs));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed distribution JSON: ") + e.what());
  }
}

Json layout_to_json(const TesterLayout& layout) {
  Json chains = Json::array();
  for (const auto& c : layout.chains) {
    chains.push_back({{"index", c.index + 1},
                      {"quantity", quantity_name(c.quantity)},
                      {"partner", c.partner + 1},
                      {"alphabet", c.watch.alphabet},
                      {"ones", symbols_to_json(c.watch.ones)},
                      {"zeros", symbols_to_json(c.watch.zeros)},
                      {"N", c.isit.N},
                      {"p", c.isit.p},
                      {"q", c.isit.q},
                      {"start", c.isit.start},
                      {"budget", c.budget},
                      {"offset", c.offset + 1},
                      {"ends_collapsed", c.ends_collapsed},
                      {"low_exit", exit_to_json(c.low_exit)},
                      {"high_exit", exit_to_json(c.high_exit)}});
  }
  Json terminals = Json::array();
  for (StateIndex t : layout.terminals) terminals.push_back(t + 1);
  return {{"kind", layout.kind},       {"n", layout.n},
          {"eps", layout.eps},         {"delta", layout.delta},
          {"tilde_eps", layout.tilde_eps}, {"total_states", layout.total_states},
          {"size_bound", layout.size_bound}, {"terminals", terminals},
          {"chains", chains}};
}

TesterLayout layout_from_json(const Json& j) {
  try {
    TesterLayout layout;
    layout.kind = j.at("kind").get<std::string>();
    layout.n = j.at("n").get<std::size_t>();
    layout.eps = j.at("eps").get<double>();
    layout.delta = j.at("delta").get<double>();
    layout.tilde_eps = j.at("tilde_eps").get<double>();
    layout.total_states = j.at("total_states").get<std::size_t>();
    layout.size_bound = j.at("size_bound").get<double>();
    for (const auto& t : j.at("terminals")) layout.terminals.push_back(t.get<StateIndex>() - 1);
    for (const auto& c : j.at("chains")) {
      ChainRecord r;
      r.index = c.at("index").get<std::size_t>() - 1;
      r.quantity = quantity_from(c.at("quantity").get<std::string>());
      r.partner = c.at("partner").get<Symbol>() - 1;
      r.watch.alphabet = c.at("alphabet").get<std::size_t>();
      r.watch.ones = symbols_from(c.at("ones"));
      r.watch.zeros = symbols_from(c.at("zeros"));
      r.isit.N = c.at("N").get<std::size_t>();
      r.isit.p = c.at("p").get<double>();
      r.isit.q = c.at("q").get<double>();
      r.isit.start = c.at("start").get<std::size_t>();
      r.budget = c.at("budget").get<double>();
      r.offset = c.at("offset").get<StateIndex>() - 1;
      r.ends_collapsed = c.at("ends_collapsed").get<bool>();
      r.low_exit = exit_from(c.at("low_exit"));
      r.high_exit = exit_from(c.at("high_exit"));
      layout.chains.push_back(std::move(r));
    }
    return layout;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed layout JSON: ") + e.what());
  }
}

Json analysis_to_json(const ChainAnalysis& a, std::span<const Hypothesis> decisions) {
  Json classes = Json::array();
  for (const auto& cls : a.decomposition.classes) {
    Json c = Json::array();
    for (StateIndex s : cls) c.push_back(s + 1);
    classes.push_back(c);
  }
  Json transient = Json::array();
  for (StateIndex s : a.decomposition.transient) transient.push_back(s + 1);
  // The full Cesaro vector can be long; only its support is written.
  Json cesaro = Json::array();
  for (StateIndex s = 0; s < a.cesaro.size(); ++s) {
    if (a.cesaro[s] > 0.0) cesaro.push_back({{"state", s + 1}, {"p", a.cesaro[s]}});
  }
  return {{"init", a.init + 1},
          {"classes", classes},
          {"transient_count", transient.size()},
          {"absorption", a.absorption},
          {"stationary", a.stationary},
          {"cesaro", cesaro},
          {"pe_h0", error_probability(a, decisions, Hypothesis::H0)},
          {"pe_h1", error_probability(a, decisions, Hypothesis::H1)},
          {"mean_absorption_time", a.mean_absorption_time},
          {"residuals",
           {{"stationary", a.stationary_residual}, {"absorption", a.absorption_residual}}}};
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace memtest
