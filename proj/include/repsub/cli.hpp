#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsub/agent_sim.hpp"
#include "repsub/dynamics.hpp"
#include "repsub/integrator.hpp"
#include "repsub/stability.hpp"

namespace repsub::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kNumericFailure = 2,
  kInapplicable = 3,
  kAgentAssumption = 4,
};

/// Everything a command needs. Echoed to `<out>/manifest.json`; feeding the
/// echo back through --manifest reproduces the outputs byte for byte.
struct RunManifest {
  std::string command;
  std::filesystem::path scenario_path;
  ControlPolicy policy;
  IntegrationConfig integration;
  SamplingConfig sampling;
  std::vector<std::vector<double>> x0;  // m action-1 shares (n = 2) or m*n values each
  std::size_t grid = 0;                 // interior points per free coordinate
  std::vector<double> d_values;
  std::size_t agents = 10000;
  std::size_t rounds = 1000;
  AgentSimConfig agent_sim;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  std::string expected_hash;              // set when loaded from an echo
  std::filesystem::path out_dir = "out";  // not part of the echo
};

nlohmann::json manifest_to_json(const RunManifest& m, const std::string& scenario_hash);
RunManifest manifest_from_json(const nlohmann::json& doc);

/// Expands an --x0 list into a state for the scenario's shape.
StateCombination parse_initial_state(const Scenario& s, const std::vector<double>& values);

int cmd_simulate(const RunManifest& m, std::ostream& err);
int cmd_portrait(const RunManifest& m, std::ostream& err);
int cmd_verify(const RunManifest& m, std::ostream& err);
int cmd_sweep(const RunManifest& m, std::ostream& err);
int cmd_agents(const RunManifest& m, std::ostream& err);

/// Dispatches on m.command and maps exceptions onto exit codes.
int run_command(const RunManifest& m, std::ostream& err);

/// Full command-line entry point (argv[0] is the program name).
int main_with_args(int argc, char** argv, std::ostream& err);

}  // namespace repsub::cli
