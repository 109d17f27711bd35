// SPDX-License-Identifier: Apache-2.0
//
// Flat INI-style experiment configuration: sections [train], [model], [noise]
// with scalar and list values.  One binding table drives parsing, key=value
// overrides, serialization and the valid-key listing, so a serialized
// snapshot round-trips to an identical run.

#pragma once

#include <string>
#include <vector>

#include "cimste/experiment.hpp"

namespace cimste::config {

// Raw parsed file: section.key -> value text (lists keep their brackets).
struct RawConfig {
  std::vector<std::pair<std::string, std::string>> entries;  // "section.key", value
  const std::string* find(const std::string& qualified_key) const;
};

RawConfig parse_ini(const std::string& text);

train::TrainConfig train_config_from_ini(const std::string& text);
train::TrainConfig load_train_config(const std::string& path);

// key is section-qualified, e.g. "train.steps" or "noise.level".
void apply_override(train::TrainConfig& cfg, const std::string& key,
                    const std::string& value);

std::string to_ini(const train::TrainConfig& cfg);

std::vector<std::string> valid_keys();

}  // namespace cimste::config
