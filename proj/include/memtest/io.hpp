#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "memtest/constructions.hpp"
#include "memtest/distribution.hpp"
#include "memtest/machine.hpp"
#include "memtest/markov.hpp"

namespace memtest {

using Json = nlohmann::json;

// All indices in files are 1-based.

/// Every (state, symbol) pair whose successor is not a plain self-loop is
/// listed explicitly, so the output is canonical for the machine's behaviour.
Json machine_to_json(const Machine& m);
/// Pairs missing from "kernel" self-loop. Throws InputError.
Machine machine_from_json(const Json& j);

Json distribution_to_json(const DiscreteDistribution& p);
DiscreteDistribution distribution_from_json(const Json& j);

Json layout_to_json(const TesterLayout& layout);
TesterLayout layout_from_json(const Json& j);

/// {classes, transient, absorption, stationary, cesaro, pe_h0, pe_h1,
/// mean_absorption_time, residuals}.
Json analysis_to_json(const ChainAnalysis& a, std::span<const Hypothesis> decisions);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace memtest
