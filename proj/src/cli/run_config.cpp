#include "dsam/run_config.hpp"

#include <fstream>
#include <set>

#include "dsam/errors.hpp"

namespace dsam {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

}  // namespace

void RunConfig::validate() const {
  generator.validate();
  if (!frontend.tone_names.empty() && frontend.tone_names.size() != generator.tones) {
    throw ConfigError("frontend.tone_names: expected " + std::to_string(generator.tones) + " names");
  }
  if (!frontend.stress_names.empty() && frontend.stress_names.size() != generator.stresses) {
    throw ConfigError("frontend.stress_names: expected " + std::to_string(generator.stresses) + " names");
  }
  train.validate(generator.languages.size());
}

void to_json(nlohmann::json& j, const RunConfig& cfg) {
  j = nlohmann::json::object();
  j["seed"] = cfg.seed;
  j["frontend"] = {{"tone_names", cfg.frontend.tone_names}, {"stress_names", cfg.frontend.stress_names}};
  j["generator"] = cfg.generator;
  j["model"] = cfg.model;
  j["train"] = cfg.train;
  j["paths"] = {{"data", cfg.paths.data}, {"out", cfg.paths.out}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"seed", "frontend", "generator", "model", "train", "paths"}, "config");
  RunConfig cfg;
  try {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("frontend")) {
      const auto& f = j.at("frontend");
      reject_unknown(f, {"tone_names", "stress_names"}, "frontend");
      if (f.contains("tone_names")) cfg.frontend.tone_names = f.at("tone_names").get<std::vector<std::string>>();
      if (f.contains("stress_names")) cfg.frontend.stress_names = f.at("stress_names").get<std::vector<std::string>>();
    }
    // Sections merge into the defaults key by key.
    if (j.contains("generator")) synthetic::from_json(j.at("generator"), cfg.generator);
    if (j.contains("model")) model::from_json(j.at("model"), cfg.model);
    if (j.contains("train")) training::from_json(j.at("train"), cfg.train);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"data", "out"}, "paths");
      cfg.paths.data = p.value("data", std::string());
      cfg.paths.out = p.value("out", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  cfg.train.seed = cfg.seed;
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override \"" + assignment + "\" must look like section.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override \"" + assignment + "\" has an empty key component");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!doc.is_object()) doc = nlohmann::json::object();
  doc[nlohmann::json::json_pointer(pointer)] = value;
}

}  // namespace dsam
