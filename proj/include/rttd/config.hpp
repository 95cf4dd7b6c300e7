#pragma once

#include <filesystem>
#include <string>

#include "rttd/harness.hpp"

namespace rttd::config {

// Scenario files are JSON. Every key is optional except "servers"; unknown
// keys are rejected so typos surface as ConfigError("<path>", ...).
harness::ScenarioConfig parse_scenario(const std::string& text);
harness::ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Canonical form with every key written; parse_scenario(dump_scenario(c)) == c.
std::string dump_scenario(const harness::ScenarioConfig& cfg);

}  // namespace rttd::config
