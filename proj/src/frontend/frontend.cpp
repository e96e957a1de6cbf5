#include "dsam/frontend.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "dsam/errors.hpp"

namespace dsam::frontend {

std::vector<std::string> FrontendConfig::default_tone_names(std::size_t m) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back("tone" + std::to_string(i + 1));
  return out;
}

std::vector<std::string> FrontendConfig::default_stress_names(std::size_t n) {
  if (n == 3) return {"primary", "secondary", "unstressed"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("stress" + std::to_string(i + 1));
  return out;
}

void FrontendConfig::validate() const {
  if (tone_names.empty()) throw ConfigError("frontend: at least one tone category (M >= 1) is required");
  if (stress_names.empty()) throw ConfigError("frontend: at least one stress category (N >= 1) is required");
  std::set<std::string> marks;
  for (const auto& m : tone_names) marks.insert(m);
  for (const auto& m : stress_names) marks.insert(m);
  marks.insert(std::string(kNoProsodyMark));
  if (marks.size() != label_width() + 1) throw ConfigError("frontend: prosody mark names must be unique");

  std::set<std::string> symbols;
  for (const auto& s : inventory) {
    if (s == kPadSymbol || s == kBoundarySymbol) throw ConfigError("frontend: reserved token in inventory: " + s);
    if (s.empty()) throw ConfigError("frontend: empty symbol in inventory");
    if (!symbols.insert(s).second) throw ConfigError("frontend: duplicate symbol in inventory: " + s);
  }
  if (languages.empty()) throw ConfigError("frontend: no languages configured");
  std::set<std::string> names;
  for (const auto& lang : languages) {
    if (!names.insert(lang.name).second) throw ConfigError("frontend: duplicate language " + lang.name);
    if (lang.symbols.empty()) throw ConfigError("frontend: language " + lang.name + " has no symbols");
    for (const auto& s : lang.symbols) {
      if (!symbols.count(s)) {
        throw ConfigError("frontend: symbol " + s + " of language " + lang.name + " is not in the inventory");
      }
    }
  }
}

std::size_t FrontendConfig::language_index(std::string_view name) const {
  for (std::size_t i = 0; i < languages.size(); ++i) {
    if (languages[i].name == name) return i;
  }
  throw std::invalid_argument("unknown language: " + std::string(name));
}

std::size_t FrontendConfig::token_of(std::string_view symbol) const {
  if (symbol == kBoundarySymbol) return kBoundaryToken;
  if (symbol == kPadSymbol) return kPadToken;
  auto it = std::find(inventory.begin(), inventory.end(), symbol);
  if (it == inventory.end()) throw std::invalid_argument("unknown symbol: " + std::string(symbol));
  return kFirstSymbolToken + static_cast<std::size_t>(it - inventory.begin());
}

std::string FrontendConfig::symbol_of(std::size_t token) const {
  if (token == kPadToken) return std::string(kPadSymbol);
  if (token == kBoundaryToken) return std::string(kBoundarySymbol);
  if (token >= vocab_size()) throw std::out_of_range("token id out of range: " + std::to_string(token));
  return inventory[token - kFirstSymbolToken];
}

std::size_t FrontendConfig::label_of(std::string_view mark) const {
  for (std::size_t i = 0; i < tone_names.size(); ++i) {
    if (tone_names[i] == mark) return i;
  }
  for (std::size_t i = 0; i < stress_names.size(); ++i) {
    if (stress_names[i] == mark) return tone_count() + i;
  }
  if (mark == kNoProsodyMark) return no_prosody_label();
  throw std::invalid_argument("unknown prosody mark: " + std::string(mark));
}

std::string FrontendConfig::mark_of(std::size_t label) const {
  if (label < tone_count()) return tone_names[label];
  if (label < label_width()) return stress_names[label - tone_count()];
  if (label == no_prosody_label()) return std::string(kNoProsodyMark);
  throw std::out_of_range("prosody label out of range: " + std::to_string(label));
}

void to_json(nlohmann::json& j, const FrontendConfig& cfg) {
  nlohmann::json langs = nlohmann::json::array();
  for (const auto& l : cfg.languages) {
    langs.push_back({{"name", l.name}, {"tonal", l.tonal}, {"symbols", l.symbols}});
  }
  j = {{"tones", cfg.tone_names}, {"stresses", cfg.stress_names}, {"inventory", cfg.inventory}, {"languages", langs}};
}

void from_json(const nlohmann::json& j, FrontendConfig& cfg) {
  cfg.tone_names = j.at("tones").get<std::vector<std::string>>();
  cfg.stress_names = j.at("stresses").get<std::vector<std::string>>();
  cfg.inventory = j.at("inventory").get<std::vector<std::string>>();
  cfg.languages.clear();
  for (const auto& l : j.at("languages")) {
    cfg.languages.push_back(
        {l.at("name").get<std::string>(), l.at("tonal").get<bool>(), l.at("symbols").get<std::vector<std::string>>()});
  }
}

PhonemeSequence encode_utterance(const Words& words, const Words& marks, std::size_t language, std::size_t speaker,
                                 const FrontendConfig& cfg) {
  if (language >= cfg.languages.size()) throw std::invalid_argument("language id out of range");
  const LanguageSpec& lang = cfg.languages[language];
  if (words.empty()) throw std::invalid_argument("utterance has no words");
  if (marks.size() != words.size()) {
    throw std::invalid_argument("marks cover " + std::to_string(marks.size()) + " words but utterance has " +
                                std::to_string(words.size()));
  }
  PhonemeSequence seq;
  seq.language = language;
  seq.speaker = speaker;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].empty()) throw std::invalid_argument("word " + std::to_string(w) + " is empty");
    if (marks[w].size() != words[w].size()) {
      throw std::invalid_argument("word " + std::to_string(w) + " has " + std::to_string(words[w].size()) +
                                  " phonemes but " + std::to_string(marks[w].size()) + " marks");
    }
    if (w > 0) {
      seq.tokens.push_back(kBoundaryToken);
      seq.labels.push_back(cfg.no_prosody_label());
    }
    for (std::size_t p = 0; p < words[w].size(); ++p) {
      const std::string& sym = words[w][p];
      const std::size_t token = cfg.token_of(sym);
      if (token < kFirstSymbolToken) throw std::invalid_argument("reserved token used as phoneme: " + sym);
      if (std::find(lang.symbols.begin(), lang.symbols.end(), sym) == lang.symbols.end()) {
        throw std::invalid_argument("symbol \"" + sym + "\" is not in the inventory of language " + lang.name);
      }
      const std::size_t label = cfg.label_of(marks[w][p]);
      if (lang.tonal && !cfg.is_tone(label)) {
        throw std::invalid_argument("tonal language " + lang.name + " requires a tone mark, got " + marks[w][p]);
      }
      if (!lang.tonal && !cfg.is_stress(label)) {
        throw std::invalid_argument("non-tonal language " + lang.name + " requires a stress mark, got " +
                                    marks[w][p]);
      }
      seq.tokens.push_back(token);
      seq.labels.push_back(label);
    }
  }
  return seq;
}

DecodedUtterance decode_utterance(const PhonemeSequence& seq, const FrontendConfig& cfg) {
  DecodedUtterance out;
  out.words.emplace_back();
  out.marks.emplace_back();
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.tokens[i] == kBoundaryToken) {
      out.words.emplace_back();
      out.marks.emplace_back();
      continue;
    }
    out.words.back().push_back(cfg.symbol_of(seq.tokens[i]));
    out.marks.back().push_back(cfg.mark_of(seq.labels[i]));
  }
  return out;
}

std::vector<double> prosody_onehot(std::size_t label, const FrontendConfig& cfg) {
  if (label > cfg.no_prosody_label()) {
    throw std::out_of_range("prosody label " + std::to_string(label) + " outside [0, " +
                            std::to_string(cfg.no_prosody_label()) + "]");
  }
  std::vector<double> v(cfg.label_width(), 0.0);
  if (label < cfg.label_width()) v[label] = 1.0;
  return v;
}

void to_json(nlohmann::json& j, const Transcription& t) {
  j = {{"id", t.id}, {"language", t.language}, {"speaker", t.speaker}, {"words", t.words}, {"marks", t.marks}};
}

Transcription parse_transcription(const nlohmann::json& j) {
  Transcription t;
  t.id = j.at("id").get<std::string>();
  t.language = j.at("language").get<std::string>();
  t.speaker = j.at("speaker").get<std::string>();
  t.words = j.at("words").get<Words>();
  t.marks = j.at("marks").get<Words>();
  return t;
}

std::vector<Transcription> read_transcriptions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::vector<Transcription> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_transcription(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string(), lineno, e.what());
    }
  }
  return out;
}

void write_transcriptions(const std::filesystem::path& path, const std::vector<Transcription>& items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : items) out << nlohmann::json(t).dump() << '\n';
}

}  // namespace dsam::frontend
