#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsam/frontend.hpp"

namespace dsam::features {

inline constexpr std::size_t kMcepDim = 40;
inline constexpr std::size_t kEnergyIndex = 40;
inline constexpr std::size_t kLogF0Index = 41;
inline constexpr std::size_t kVuvIndex = 42;
inline constexpr std::size_t kFrameWidth = 43;
// Normalized dimensions: everything except V/UV.
inline constexpr std::size_t kStatDim = 42;

// Per-frame [mcep(40), energy, logF0, vuv]. logF0 is meaningful only on
// voiced frames and is stored as 0 elsewhere.
class FeatureTrack {
 public:
  FeatureTrack() = default;
  explicit FeatureTrack(std::size_t frames) : values_(frames * kFrameWidth, 0.0) {}
  FeatureTrack(std::size_t frames, std::vector<double> values);

  std::size_t frame_count() const { return values_.size() / kFrameWidth; }
  std::span<double> frame(std::size_t t) { return {values_.data() + t * kFrameWidth, kFrameWidth}; }
  std::span<const double> frame(std::size_t t) const { return {values_.data() + t * kFrameWidth, kFrameWidth}; }
  double& at(std::size_t t, std::size_t d) { return values_[t * kFrameWidth + d]; }
  double at(std::size_t t, std::size_t d) const { return values_[t * kFrameWidth + d]; }
  double energy(std::size_t t) const { return at(t, kEnergyIndex); }
  double logf0(std::size_t t) const { return at(t, kLogF0Index); }
  bool voiced(std::size_t t) const { return at(t, kVuvIndex) > 0.5; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // T >= 1, vuv in {0,1}, all values finite.
  void validate() const;

  bool operator==(const FeatureTrack&) const = default;

 private:
  std::vector<double> values_;
};

struct NormStats {
  std::array<double, kStatDim> mean{};
  std::array<double, kStatDim> stddev{};

  void validate() const;
};

// Global pooled statistics with the population variance convention; logF0
// statistics use voiced frames only.
NormStats compute_norm_stats(std::span<const FeatureTrack* const> tracks);
FeatureTrack normalize(const FeatureTrack& track, const NormStats& stats);
FeatureTrack denormalize(const FeatureTrack& track, const NormStats& stats);

// Little-endian f32 file: "DSAM", u32 frame count, u32 frame width, frames.
void write_feature_file(const std::filesystem::path& path, const FeatureTrack& track);
FeatureTrack read_feature_file(const std::filesystem::path& path);

enum class Split { kTrain, kDev, kTest };
std::string to_string(Split split);
Split parse_split(const std::string& tag);

struct Utterance {
  frontend::Transcription transcription;
  frontend::PhonemeSequence sequence;
  FeatureTrack track;  // raw (unnormalized) features
  Split split = Split::kTrain;
  // Frames per token when known (synthetic data); empty otherwise.
  std::vector<std::size_t> durations;
};

struct Corpus {
  frontend::FrontendConfig frontend;
  std::vector<std::string> speakers;
  std::vector<Utterance> utterances;
  NormStats stats;

  std::size_t language_count() const { return frontend.languages.size(); }
  std::size_t speaker_index(const std::string& name) const;
  std::vector<const Utterance*> select(Split split) const;
  // Recomputes stats from the training split.
  void refresh_stats();
  void validate() const;
};

// Writes corpus.json, manifest.jsonl and feats/*.dsam under dir.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
// Reads a manifest; corpus.json is expected next to it.
Corpus load_corpus(const std::filesystem::path& manifest);

// Builds an utterance from a transcription line against the corpus inventory.
frontend::PhonemeSequence encode_transcription(const frontend::Transcription& t, const frontend::FrontendConfig& cfg,
                                               const std::vector<std::string>& speakers);

}  // namespace dsam::features
