#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsam/model/config.hpp"
#include "dsam/synthetic.hpp"
#include "dsam/training/trainer.hpp"
#include "json.hpp"

namespace dsam {

// Display names of the prosody labels; counts must match the generator's
// tone and stress counts. Empty lists keep the generated defaults.
struct LabelNames {
  std::vector<std::string> tone_names;
  std::vector<std::string> stress_names;
};

struct RunPaths {
  std::string data;  // default for --data
  std::string out;   // default for --out
};

// One JSON document covering every command. Missing sections and keys keep
// their defaults; unknown keys anywhere are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  LabelNames frontend;
  synthetic::GeneratorConfig generator = synthetic::GeneratorConfig::desk_default();
  model::ModelConfig model;
  training::TrainConfig train;
  RunPaths paths;

  // Checks every section; data-dependent model sizes are checked at train time.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Reads a config file; a missing file raises MissingFileError, malformed JSON
// or schema violations raise ConfigError.
RunConfig load_run_config(const std::filesystem::path& path);

// Applies "section.key=value" overrides to a config document. The value is
// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace dsam
