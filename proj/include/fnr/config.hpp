#pragma once

#include <cstdint>
#include <string>

#include "fnr/profile.hpp"

namespace fnr {

enum class Stage { Coarse, Refine };

struct TrainConfig {
    Stage stage = Stage::Coarse;
    double lr = 1e-4;
    std::int64_t iterations = 0; // 0 selects the stage/profile default
    int batch_size = 2;
    double lambda_dcp = 1e-4;
    std::uint64_t seed = 42;
    std::int64_t checkpoint_every = 1000;
};

struct Config {
    std::string profile_name = "desk";
    ArchProfile profile = ArchProfile::desk();
    TrainConfig train;
};

// Stage iteration defaults: 5k/4k for the desk profile, 200k/150k for full.
std::int64_t default_iterations(const std::string& profile_name, Stage stage);

Config default_config(const std::string& profile_name);

// Plain-text `key = value` lines with '#' comments. Unknown keys and
// malformed values raise ConfigError carrying the line number. The `profile`
// key is applied before all others so later keys override its defaults.
Config load_config(const std::string& path);

// Applies one key/value pair (also used for CLI overrides). line_no <= 0
// marks a non-file source.
void apply_config_value(Config& config, const std::string& key, const std::string& value,
                        int line_no = 0);

// Flat key=value dump, suitable for run manifests.
std::string config_to_string(const Config& config);

} // namespace fnr
