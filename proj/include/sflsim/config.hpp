#pragma once

#include <string>

#include "sflsim/metrics.hpp"

namespace sflsim {

/// Parses the JSON config document (see README for the key reference).
/// Unknown keys are rejected with their path so typos surface immediately.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

std::string experiment_config_to_json(const ExperimentConfig& cfg);

/// Built-in experiment presets: fig4a, fig4b, fig5-awgn, fig5-rayleigh, smoke.
std::string preset_config(const std::string& name);

}  // namespace sflsim
