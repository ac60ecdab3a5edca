#include "repsub/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace repsub {

using nlohmann::json;

namespace {

double number_at(const json& v, const std::string& where) {
  if (!v.is_number()) throw ScenarioError(where + ": expected a number");
  return v.get<double>();
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path.string() + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // e.what() carries "at line L, column C".
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

Scenario parse_scenario(const json& doc) {
  if (!doc.is_object() || !doc.contains("populations")) throw ScenarioError("populations: missing");
  const json& pops = doc.at("populations");
  if (!pops.is_array()) throw ScenarioError("populations: expected an array");
  ScenarioDescription raw;
  for (std::size_t k = 0; k < pops.size(); ++k) {
    const std::string at = "populations[" + std::to_string(k) + "]";
    const json& p = pops[k];
    if (!p.is_object()) throw ScenarioError(at + ": expected an object");
    if (!p.contains("share")) throw ScenarioError(at + ".share: missing");
    if (!p.contains("payoff")) throw ScenarioError(at + ".payoff: missing");
    PopulationSpec spec;
    spec.share = number_at(p.at("share"), at + ".share");
    const json& a = p.at("payoff");
    if (!a.is_array()) throw ScenarioError(at + ".payoff: expected an array of rows");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string row_at = at + ".payoff[" + std::to_string(i) + "]";
      if (!a[i].is_array()) throw ScenarioError(row_at + ": expected an array");
      std::vector<double> row;
      for (std::size_t j = 0; j < a[i].size(); ++j)
        row.push_back(number_at(a[i][j], row_at + "[" + std::to_string(j) + "]"));
      spec.payoff.push_back(std::move(row));
    }
    raw.populations.push_back(std::move(spec));
  }
  return validate_scenario(raw);
}

Scenario load_scenario(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  try {
    return parse_scenario(doc);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

json scenario_to_json(const Scenario& s) {
  json pops = json::array();
  for (const auto& p : s.describe().populations) pops.push_back(json{{"share", p.share}, {"payoff", p.payoff}});
  return json{{"populations", pops}};
}

ControlPolicy parse_policy(const json& doc) {
  if (!doc.is_object()) throw ScenarioError("policy: expected an object");
  ControlPolicy p;
  if (doc.contains("d")) p.d = number_at(doc.at("d"), "policy.d");
  if (doc.contains("y_star")) {
    const json& ys = doc.at("y_star");
    if (!ys.is_array()) throw ScenarioError("policy.y_star: expected an array");
    for (std::size_t i = 0; i < ys.size(); ++i)
      p.y_star.push_back(number_at(ys[i], "policy.y_star[" + std::to_string(i) + "]"));
  }
  return p;
}

ControlPolicy load_policy(const std::filesystem::path& path) {
  const json doc = read_json_file(path);
  try {
    return parse_policy(doc);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

json policy_to_json(const ControlPolicy& p) { return json{{"d", p.d}, {"y_star", p.y_star}}; }

std::string scenario_hash(const Scenario& s) {
  const std::string text = scenario_to_json(s).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace repsub
