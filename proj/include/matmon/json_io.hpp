#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "matmon/scenario.hpp"
#include "matmon/synchro.hpp"
#include "matmon/tmn.hpp"

namespace matmon {

// Config parsing is strict: unknown fields are rejected so typos never pass
// silently.

NetworkSpec network_spec_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const TmnNetwork& net);

CompositionRegistry registry_from_json(const nlohmann::json& j);
nlohmann::json registry_to_json(const CompositionRegistry& reg);

/// Parses and validates a scenario with its embedded network and registry.
Scenario scenario_from_json(const nlohmann::json& j);

/// Parses without the semantic validation pass, so callers can report every
/// violation instead of the first.
Scenario parse_scenario(const nlohmann::json& j);

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path, const nlohmann::json& j);

TmnNetwork load_network(const std::filesystem::path& path);
CompositionRegistry load_registry(const std::filesystem::path& path);
Scenario load_scenario(const std::filesystem::path& path);

/// FNV-1a 64-bit hex digest of the registry's canonical JSON form. Units and
/// the concentrator must agree on it before reports are accepted.
std::string registry_hash(const CompositionRegistry& reg);

}  // namespace matmon
