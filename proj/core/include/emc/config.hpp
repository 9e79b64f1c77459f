#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "emc/harness.hpp"

namespace emc {

inline constexpr int kConfigSchemaVersion = 1;

/// Canonical JSON form of a config; every field is written explicitly.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Parses a config document. Omitted fields keep their defaults; unknown
/// keys, wrong types and unsupported schema versions raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a hash (hex) of the canonical config without seed, runs, output
/// location and thread count, so every run of one experiment shares it.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace emc
