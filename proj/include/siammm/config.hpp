#pragma once

#include <string>
#include <vector>

#include "siammm/trainer.hpp"

namespace siammm::config {

// every key set_key understands, in a stable order
const std::vector<std::string>& train_keys();

// applies one key=value pair; unknown keys and unparseable values throw
// std::invalid_argument, the former listing all valid keys
void set_key(train::TrainConfig& cfg, const std::string& key, const std::string& value);

// flat key=value file; '#' starts a comment, blank lines are skipped
train::TrainConfig load_file(const std::string& path);

// each entry "key=value", applied in order
void apply_overrides(train::TrainConfig& cfg, const std::vector<std::string>& sets);

std::string describe(const train::TrainConfig& cfg);

// named single-knob tweaks used by the ablation sweep
const std::vector<std::string>& ablation_variants();
void apply_variant(train::TrainConfig& cfg, const std::string& name);

}  // namespace siammm::config
