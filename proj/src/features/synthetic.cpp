#include "dsam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include "dsam/errors.hpp"

namespace dsam::synthetic {
namespace {

constexpr std::uint64_t kUtteranceStream = 0x9e3779b97f4a7c15ULL;
constexpr double kPauseEnergy = -1.0;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

GeneratorConfig GeneratorConfig::desk_default() {
  GeneratorConfig cfg;
  cfg.vowels = {"a", "i", "u", "e", "o"};
  cfg.unvoiced_consonants = {"p", "t", "k", "s"};
  cfg.languages = {
      {"xa", true, {"a", "i", "u", "b", "m", "p", "t", "s"}},
      {"xb", false, {"a", "e", "o", "d", "n", "k", "t", "l", "s"}},
  };
  cfg.speakers = {{"s0", 0.0, {"xa", "xb"}}, {"s1", 0.3, {"xa", "xb"}}};
  return cfg;
}

GeneratorConfig GeneratorConfig::five_languages() {
  GeneratorConfig cfg;
  cfg.vowels = {"a", "i", "u", "e", "o", "y"};
  cfg.unvoiced_consonants = {"p", "t", "k", "s", "f"};
  cfg.languages = {
      {"zh", true, {"a", "i", "u", "m", "n", "p", "t", "s"}},
      {"de", false, {"a", "e", "i", "o", "u", "b", "d", "k", "t", "f"}},
      {"fr", false, {"a", "e", "i", "o", "y", "b", "d", "p", "s", "l"}},
      {"nl", false, {"a", "e", "o", "y", "b", "d", "k", "f", "l"}},
      {"ru", false, {"a", "i", "o", "u", "m", "n", "k", "t", "s"}},
  };
  cfg.speakers = {{"zh0", 0.2, {"zh"}}, {"de0", -0.2, {"de"}}, {"fr0", 0.1, {"fr"}},
                  {"nl0", -0.1, {"nl"}}, {"ru0", 0.0, {"ru"}}};
  cfg.utterances_per_language = 20;
  return cfg;
}

void GeneratorConfig::validate() const {
  if (languages.empty()) throw ConfigError("generator: no languages");
  if (speakers.empty()) throw ConfigError("generator: no speakers");
  if (tones == 0 || stresses == 0) throw ConfigError("generator: tones and stresses must be positive");
  if (utterances_per_language == 0) throw ConfigError("generator: utterances_per_language must be positive");
  if (min_words == 0 || min_words > max_words) throw ConfigError("generator: invalid word count range");
  if (min_phonemes_per_word == 0 || min_phonemes_per_word > max_phonemes_per_word) {
    throw ConfigError("generator: invalid phonemes-per-word range");
  }
  if (min_duration == 0 || min_duration > max_duration) throw ConfigError("generator: invalid duration range");
  if (!(mcep_noise >= 0.0)) throw ConfigError("generator: mcep_noise must be nonnegative");
  if (!(base_f0_hz > 0.0)) throw ConfigError("generator: base_f0_hz must be positive");
  if (split_ratio[0] == 0) throw ConfigError("generator: split ratio needs a nonzero training share");
  for (const auto& lang : languages) {
    if (lang.symbols.empty()) throw ConfigError("generator: language " + lang.name + " has no symbols");
  }
  for (const auto& spk : speakers) {
    for (const auto& l : spk.languages) {
      if (std::none_of(languages.begin(), languages.end(), [&](const auto& x) { return x.name == l; })) {
        throw ConfigError("generator: speaker " + spk.name + " refers to unknown language " + l);
      }
    }
  }
  for (const auto& lang : languages) {
    if (std::none_of(speakers.begin(), speakers.end(), [&](const auto& s) { return contains(s.languages, lang.name); })) {
      throw ConfigError("generator: language " + lang.name + " has no speaker");
    }
  }
  if (require_shared_symbols && languages.size() > 1) {
    for (std::size_t i = 0; i < languages.size(); ++i) {
      bool shared = false;
      for (std::size_t j = 0; j < languages.size() && !shared; ++j) {
        if (i == j) continue;
        for (const auto& s : languages[i].symbols) shared = shared || contains(languages[j].symbols, s);
      }
      if (!shared) throw ConfigError("generator: language " + languages[i].name + " shares no symbol with others");
    }
  }
  frontend_config().validate();
}

frontend::FrontendConfig GeneratorConfig::frontend_config() const {
  frontend::FrontendConfig fc;
  fc.tone_names = frontend::FrontendConfig::default_tone_names(tones);
  fc.stress_names = frontend::FrontendConfig::default_stress_names(stresses);
  for (const auto& lang : languages) {
    for (const auto& s : lang.symbols) {
      if (!contains(fc.inventory, s)) fc.inventory.push_back(s);
    }
    fc.languages.push_back({lang.name, lang.tonal, lang.symbols});
  }
  return fc;
}

void to_json(nlohmann::json& j, const GeneratorConfig& cfg) {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : cfg.languages) langs.push_back({{"name", l.name}, {"tonal", l.tonal}, {"symbols", l.symbols}});
  nlohmann::json spks = nlohmann::json::array();
  for (const auto& s : cfg.speakers) {
    spks.push_back({{"name", s.name}, {"logf0_offset", s.logf0_offset}, {"languages", s.languages}});
  }
  j = {{"vowels", cfg.vowels},
       {"unvoiced_consonants", cfg.unvoiced_consonants},
       {"languages", langs},
       {"speakers", spks},
       {"tones", cfg.tones},
       {"stresses", cfg.stresses},
       {"utterances_per_language", cfg.utterances_per_language},
       {"min_words", cfg.min_words},
       {"max_words", cfg.max_words},
       {"min_phonemes_per_word", cfg.min_phonemes_per_word},
       {"max_phonemes_per_word", cfg.max_phonemes_per_word},
       {"min_duration", cfg.min_duration},
       {"max_duration", cfg.max_duration},
       {"pause_frames", cfg.pause_frames},
       {"mcep_noise", cfg.mcep_noise},
       {"base_f0_hz", cfg.base_f0_hz},
       {"split_ratio", cfg.split_ratio},
       {"require_shared_symbols", cfg.require_shared_symbols}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& cfg) {
  static const std::set<std::string> known = {
      "vowels",      "unvoiced_consonants", "languages",     "speakers",
      "tones",       "stresses",            "utterances_per_language",
      "min_words",   "max_words",           "min_phonemes_per_word",
      "max_phonemes_per_word",              "min_duration",  "max_duration",
      "pause_frames", "mcep_noise",         "base_f0_hz",    "split_ratio",
      "require_shared_symbols"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("generator: unknown key \"" + it.key() + "\"");
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("vowels", cfg.vowels);
  opt("unvoiced_consonants", cfg.unvoiced_consonants);
  if (j.contains("languages")) {
    cfg.languages.clear();
    for (const auto& l : j.at("languages")) {
      cfg.languages.push_back({l.at("name").get<std::string>(), l.value("tonal", false),
                               l.at("symbols").get<std::vector<std::string>>()});
    }
  }
  if (j.contains("speakers")) {
    cfg.speakers.clear();
    for (const auto& s : j.at("speakers")) {
      cfg.speakers.push_back({s.at("name").get<std::string>(), s.value("logf0_offset", 0.0),
                              s.at("languages").get<std::vector<std::string>>()});
    }
  }
  opt("tones", cfg.tones);
  opt("stresses", cfg.stresses);
  opt("utterances_per_language", cfg.utterances_per_language);
  opt("min_words", cfg.min_words);
  opt("max_words", cfg.max_words);
  opt("min_phonemes_per_word", cfg.min_phonemes_per_word);
  opt("max_phonemes_per_word", cfg.max_phonemes_per_word);
  opt("min_duration", cfg.min_duration);
  opt("max_duration", cfg.max_duration);
  opt("pause_frames", cfg.pause_frames);
  opt("mcep_noise", cfg.mcep_noise);
  opt("base_f0_hz", cfg.base_f0_hz);
  opt("split_ratio", cfg.split_ratio);
  opt("require_shared_symbols", cfg.require_shared_symbols);
}

ProsodyTarget prosody_contour(std::size_t label, double u, const frontend::FrontendConfig& cfg) {
  const double pi = std::numbers::pi;
  ProsodyTarget out;
  if (cfg.is_tone(label)) {
    switch (label) {
      case 0: out.logf0_offset = 0.25; break;
      case 1: out.logf0_offset = -0.1 + 0.35 * u; break;
      case 2: out.logf0_offset = -0.15 - 0.2 * std::sin(pi * u); break;
      case 3: out.logf0_offset = 0.3 - 0.5 * u; break;
      case 4: out.logf0_offset = 0.0; break;
      default: {
        const double k = static_cast<double>(label);
        out.logf0_offset = 0.1 * std::cos(k) + ((label % 2) ? 0.1 : -0.1) * (u - 0.5);
      }
    }
    out.energy = 1.0 + 0.8 * out.logf0_offset - 0.2 * u;
  } else if (cfg.is_stress(label)) {
    const std::size_t s = label - cfg.tone_count();
    const double n = static_cast<double>(cfg.stress_count());
    const double rank = n > 1 ? static_cast<double>(s) / (n - 1.0) : 0.0;  // 0 = strongest
    out.logf0_offset = 0.2 - 0.3 * rank - (s == 0 ? 0.1 * u : 0.0);
    out.energy = 1.5 - 0.9 * rank - 0.1 * u;
  } else {
    out.energy = kPauseEnergy;
  }
  return out;
}

Templates make_templates(const GeneratorConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Templates t;
  for (const auto& sym : cfg.frontend_config().inventory) {
    std::array<double, features::kMcepDim> v{};
    for (std::size_t d = 0; d < features::kMcepDim; ++d) v[d] = normal(rng) / (1.0 + 0.1 * static_cast<double>(d));
    t.phoneme.emplace(sym, v);
  }
  for (std::size_t d = 0; d < features::kMcepDim; ++d) t.pause[d] = normal(rng) / (1.0 + 0.1 * static_cast<double>(d));
  return t;
}

features::Corpus generate_synthetic_corpus(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const frontend::FrontendConfig fc = cfg.frontend_config();
  const Templates templates = make_templates(cfg, seed);
  std::mt19937_64 rng(seed ^ kUtteranceStream);
  std::normal_distribution<double> noise(0.0, 1.0);

  features::Corpus corpus;
  corpus.frontend = fc;
  for (const auto& s : cfg.speakers) corpus.speakers.push_back(s.name);

  const std::size_t ratio_total = cfg.split_ratio[0] + cfg.split_ratio[1] + cfg.split_ratio[2];
  for (std::size_t li = 0; li < cfg.languages.size(); ++li) {
    const SyntheticLanguage& lang = cfg.languages[li];
    std::vector<std::string> vowels, consonants;
    for (const auto& s : lang.symbols) (contains(cfg.vowels, s) ? vowels : consonants).push_back(s);
    std::vector<std::size_t> lang_speakers;
    for (std::size_t si = 0; si < cfg.speakers.size(); ++si) {
      if (contains(cfg.speakers[si].languages, lang.name)) lang_speakers.push_back(si);
    }

    const std::size_t n = cfg.utterances_per_language;
    const std::size_t first = corpus.utterances.size();
    for (std::size_t k = 0; k < n; ++k) {
      features::Utterance u;
      const std::size_t speaker = lang_speakers[k % lang_speakers.size()];
      u.transcription.id = lang.name + "_" + std::to_string(1000 + k).substr(1);
      u.transcription.language = lang.name;
      u.transcription.speaker = cfg.speakers[speaker].name;

      const std::size_t word_count = uniform_index(rng, cfg.min_words, cfg.max_words);
      for (std::size_t w = 0; w < word_count; ++w) {
        const std::size_t len = uniform_index(rng, cfg.min_phonemes_per_word, cfg.max_phonemes_per_word);
        std::vector<std::string> word;
        for (std::size_t p = 0; p < len; ++p) {
          // Alternate consonant/vowel when the language has both classes.
          const bool want_vowel = (p % 2 == 1);
          const auto& pool = (want_vowel ? vowels : consonants).empty() ? lang.symbols
                                                                         : (want_vowel ? vowels : consonants);
          word.push_back(pool[uniform_index(rng, 0, pool.size() - 1)]);
        }
        std::vector<std::string> marks(len);
        if (lang.tonal) {
          const std::size_t tone = uniform_index(rng, 0, cfg.tones - 1);
          std::fill(marks.begin(), marks.end(), fc.tone_names[tone]);
        } else {
          const std::string& weakest = fc.stress_names.back();
          std::vector<std::size_t> vowel_pos;
          for (std::size_t p = 0; p < len; ++p) {
            marks[p] = weakest;
            if (contains(cfg.vowels, word[p])) vowel_pos.push_back(p);
          }
          if (!vowel_pos.empty()) {
            const std::size_t primary = vowel_pos[uniform_index(rng, 0, vowel_pos.size() - 1)];
            for (std::size_t p : vowel_pos) {
              if (p == primary) {
                marks[p] = fc.stress_names.front();
              } else if (fc.stress_names.size() > 2 && std::uniform_real_distribution<double>(0, 1)(rng) < 0.3) {
                marks[p] = fc.stress_names[1];
              }
            }
          }
        }
        u.transcription.words.push_back(std::move(word));
        u.transcription.marks.push_back(std::move(marks));
      }
      u.sequence = frontend::encode_utterance(u.transcription.words, u.transcription.marks, li, speaker, fc);

      std::vector<double> values;
      for (std::size_t i = 0; i < u.sequence.length(); ++i) {
        const bool boundary = u.sequence.tokens[i] == frontend::kBoundaryToken;
        const std::size_t dur = boundary ? cfg.pause_frames : uniform_index(rng, cfg.min_duration, cfg.max_duration);
        u.durations.push_back(dur);
        const std::string sym = fc.symbol_of(u.sequence.tokens[i]);
        const bool voiced = !boundary && !contains(cfg.unvoiced_consonants, sym);
        const auto& tmpl = boundary ? templates.pause : templates.phoneme.at(sym);
        for (std::size_t f = 0; f < dur; ++f) {
          const double pos = (static_cast<double>(f) + 0.5) / static_cast<double>(dur);
          for (std::size_t d = 0; d < features::kMcepDim; ++d) values.push_back(f32(tmpl[d] + cfg.mcep_noise * noise(rng)));
          const ProsodyTarget pt = prosody_contour(u.sequence.labels[i], pos, fc);
          values.push_back(f32(pt.energy));
          values.push_back(voiced ? f32(std::log(cfg.base_f0_hz) + cfg.speakers[speaker].logf0_offset + pt.logf0_offset)
                                  : 0.0);
          values.push_back(voiced ? 1.0 : 0.0);
        }
      }
      const std::size_t frames = values.size() / features::kFrameWidth;
      u.track = features::FeatureTrack(frames, std::move(values));
      corpus.utterances.push_back(std::move(u));
    }

    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = first + k;
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t dev = n * cfg.split_ratio[1] / ratio_total;
    const std::size_t test = n * cfg.split_ratio[2] / ratio_total;
    for (std::size_t k = 0; k < n; ++k) {
      auto& split = corpus.utterances[order[k]].split;
      split = k < dev ? features::Split::kDev : (k < dev + test ? features::Split::kTest : features::Split::kTrain);
    }
  }
  corpus.refresh_stats();
  return corpus;
}

}  // namespace dsam::synthetic
