#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"

namespace repsub {

inline constexpr const char* kVersion = "0.1.0";

/// Scenario document:
///   { "populations": [ { "share": 0.2, "payoff": [[2, 1], [3, 4]] }, ... ] }
/// Throws ScenarioError naming the offending field.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_to_json(const Scenario& s);

/// Policy document: { "d": 1.2, "y_star": [1, 0] }. Both keys optional; a
/// missing d means no subsidy.
ControlPolicy parse_policy(const nlohmann::json& doc);
ControlPolicy load_policy(const std::filesystem::path& path);
nlohmann::json policy_to_json(const ControlPolicy& p);

/// Reads a JSON file, reporting parse errors with line/column.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// FNV-1a over the canonical serialization of the scenario, as 16 hex digits.
std::string scenario_hash(const Scenario& s);

}  // namespace repsub
