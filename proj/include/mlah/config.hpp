#pragma once

// JSON experiment configuration with nested blocks
// {grid, reward, attack, agent, training, sweep} and dotted-key overrides
// such as "attack.interval_steps=250".

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mlah/harness.hpp"

namespace mlah {

nlohmann::json to_json(const ExperimentConfig& config);

/// Parses and validates. Throws ConfigError whose message lists every
/// problem found (unknown keys, wrong types, violated constraints), one per line.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Sets a dotted key. The value is parsed as JSON when possible and
/// otherwise taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});

}  // namespace mlah
