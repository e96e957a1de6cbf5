#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dsam::frontend {

inline constexpr std::size_t kPadToken = 0;
inline constexpr std::size_t kBoundaryToken = 1;
inline constexpr std::size_t kFirstSymbolToken = 2;
inline constexpr std::string_view kPadSymbol = "<pad>";
inline constexpr std::string_view kBoundarySymbol = "<wb>";
inline constexpr std::string_view kNoProsodyMark = "none";

struct LanguageSpec {
  std::string name;
  bool tonal = false;
  std::vector<std::string> symbols;
};

// Symbol inventory and prosody label layout. Label ids [0, M) are tones,
// [M, M+N) are stress categories and M+N is the no-prosody label carried by
// word-boundary tokens.
struct FrontendConfig {
  std::vector<std::string> tone_names;
  std::vector<std::string> stress_names;
  std::vector<std::string> inventory;
  std::vector<LanguageSpec> languages;

  static std::vector<std::string> default_tone_names(std::size_t m);
  static std::vector<std::string> default_stress_names(std::size_t n);

  std::size_t tone_count() const { return tone_names.size(); }
  std::size_t stress_count() const { return stress_names.size(); }
  std::size_t label_width() const { return tone_count() + stress_count(); }
  std::size_t no_prosody_label() const { return label_width(); }
  std::size_t vocab_size() const { return inventory.size() + kFirstSymbolToken; }

  void validate() const;

  std::size_t language_index(std::string_view name) const;
  std::size_t token_of(std::string_view symbol) const;
  std::string symbol_of(std::size_t token) const;
  std::size_t label_of(std::string_view mark) const;
  std::string mark_of(std::size_t label) const;
  bool is_tone(std::size_t label) const { return label < tone_count(); }
  bool is_stress(std::size_t label) const { return label >= tone_count() && label < label_width(); }
};

void to_json(nlohmann::json& j, const FrontendConfig& cfg);
void from_json(const nlohmann::json& j, FrontendConfig& cfg);

struct PhonemeSequence {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> labels;
  std::size_t language = 0;
  std::size_t speaker = 0;

  std::size_t length() const { return tokens.size(); }
};

using Words = std::vector<std::vector<std::string>>;

PhonemeSequence encode_utterance(const Words& words, const Words& marks, std::size_t language, std::size_t speaker,
                                 const FrontendConfig& cfg);

struct DecodedUtterance {
  Words words;
  Words marks;
};
DecodedUtterance decode_utterance(const PhonemeSequence& seq, const FrontendConfig& cfg);

// M+N one-hot; the no-prosody label maps to all zeros.
std::vector<double> prosody_onehot(std::size_t label, const FrontendConfig& cfg);

// One line of a transcription JSON-lines file.
struct Transcription {
  std::string id;
  std::string language;
  std::string speaker;
  Words words;
  Words marks;
};

void to_json(nlohmann::json& j, const Transcription& t);
Transcription parse_transcription(const nlohmann::json& j);
std::vector<Transcription> read_transcriptions(const std::filesystem::path& path);
void write_transcriptions(const std::filesystem::path& path, const std::vector<Transcription>& items);

}  // namespace dsam::frontend
