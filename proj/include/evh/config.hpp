#pragma once

#include <string>

#include "evh/loop.hpp"

namespace evh {

// Single JSON document describing a full run. Every key is optional and
// falls back to the struct defaults; unknown keys are rejected so typos
// fail loudly instead of silently running with defaults.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Resolved form: all defaults filled in. Re-loadable by load_config.
std::string resolved_config_json(const ExperimentConfig& cfg);
void save_resolved_config(const std::string& path, const ExperimentConfig& cfg);

// Compiled-in action parameter pools, echoed beside each run so the
// meaning of every (action, param) pair is recoverable from artifacts.
std::string action_pools_json();
void save_action_pools(const std::string& path);

}  // namespace evh
