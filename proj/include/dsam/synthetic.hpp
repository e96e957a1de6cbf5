#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsam/features.hpp"
#include "json.hpp"

namespace dsam::synthetic {

struct SyntheticLanguage {
  std::string name;
  bool tonal = false;
  std::vector<std::string> symbols;
};

struct SyntheticSpeaker {
  std::string name;
  double logf0_offset = 0.0;
  std::vector<std::string> languages;
};

// Toy multilingual corpus with a known factorization: mel-cepstra depend on
// the phoneme only, energy/logF0 on the prosody label (plus a speaker logF0
// offset), voicing on the phoneme class.
struct GeneratorConfig {
  std::vector<std::string> vowels;
  std::vector<std::string> unvoiced_consonants;
  std::vector<SyntheticLanguage> languages;
  std::vector<SyntheticSpeaker> speakers;
  std::size_t tones = 5;
  std::size_t stresses = 3;
  std::size_t utterances_per_language = 4;
  std::size_t min_words = 1;
  std::size_t max_words = 2;
  std::size_t min_phonemes_per_word = 2;
  std::size_t max_phonemes_per_word = 3;
  std::size_t min_duration = 3;
  std::size_t max_duration = 3;
  std::size_t pause_frames = 1;
  double mcep_noise = 0.02;
  double base_f0_hz = 150.0;
  std::array<std::size_t, 3> split_ratio{8, 1, 1};
  bool require_shared_symbols = true;

  // Two languages (one tonal), two speakers.
  static GeneratorConfig desk_default();
  // Five languages (one tonal), one speaker per language.
  static GeneratorConfig five_languages();

  void validate() const;
  frontend::FrontendConfig frontend_config() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, GeneratorConfig& cfg);

struct ProsodyTarget {
  double energy = 0.0;
  double logf0_offset = 0.0;
};

// Energy and logF0 offset of a prosody label at relative position u in [0,1]
// of the phoneme.
ProsodyTarget prosody_contour(std::size_t label, double u, const frontend::FrontendConfig& cfg);

// Noise-free mel-cepstral template per inventory symbol plus the pause template.
struct Templates {
  std::map<std::string, std::array<double, features::kMcepDim>> phoneme;
  std::array<double, features::kMcepDim> pause{};
};
Templates make_templates(const GeneratorConfig& cfg, std::uint64_t seed);

features::Corpus generate_synthetic_corpus(const GeneratorConfig& cfg, std::uint64_t seed);

}  // namespace dsam::synthetic
