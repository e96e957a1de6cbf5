#include "dsam/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "dsam/errors.hpp"

namespace dsam::features {
namespace {

constexpr char kMagic[4] = {'D', 'S', 'A', 'M'};
constexpr double kMinStd = 1e-12;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

const char* dim_name(std::size_t d) {
  if (d == kEnergyIndex) return "energy";
  if (d == kLogF0Index) return "logF0";
  return "mcep";
}

}  // namespace

FeatureTrack::FeatureTrack(std::size_t frames, std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() != frames * kFrameWidth) {
    throw std::invalid_argument("feature track: " + std::to_string(values_.size()) + " values for " +
                                std::to_string(frames) + " frames of width 43");
  }
}

void FeatureTrack::validate() const {
  if (frame_count() == 0) throw std::invalid_argument("feature track has no frames");
  for (std::size_t t = 0; t < frame_count(); ++t) {
    const double v = at(t, kVuvIndex);
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("frame " + std::to_string(t) + ": vuv must be 0 or 1");
    for (std::size_t d = 0; d < kFrameWidth; ++d) {
      if (!std::isfinite(at(t, d))) {
        throw std::invalid_argument("frame " + std::to_string(t) + ": non-finite " + dim_name(d));
      }
    }
  }
}

void NormStats::validate() const {
  for (std::size_t d = 0; d < kStatDim; ++d) {
    if (!std::isfinite(mean[d]) || !(stddev[d] > kMinStd) || !std::isfinite(stddev[d])) {
      throw std::invalid_argument("invalid normalization statistics for dimension " + std::to_string(d));
    }
  }
}

NormStats compute_norm_stats(std::span<const FeatureTrack* const> tracks) {
  if (tracks.empty()) throw std::invalid_argument("normalization statistics need a nonempty training split");
  std::array<double, kStatDim> sum{};
  std::array<double, kStatDim> count{};
  for (const FeatureTrack* tr : tracks) {
    for (std::size_t t = 0; t < tr->frame_count(); ++t) {
      for (std::size_t d = 0; d < kStatDim; ++d) {
        if (d == kLogF0Index && !tr->voiced(t)) continue;
        sum[d] += tr->at(t, d);
        count[d] += 1.0;
      }
    }
  }
  if (count[kLogF0Index] == 0.0) throw std::invalid_argument("no voiced frames for logF0 statistics");
  NormStats stats;
  for (std::size_t d = 0; d < kStatDim; ++d) stats.mean[d] = sum[d] / count[d];
  std::array<double, kStatDim> sq{};
  for (const FeatureTrack* tr : tracks) {
    for (std::size_t t = 0; t < tr->frame_count(); ++t) {
      for (std::size_t d = 0; d < kStatDim; ++d) {
        if (d == kLogF0Index && !tr->voiced(t)) continue;
        const double diff = tr->at(t, d) - stats.mean[d];
        sq[d] += diff * diff;
      }
    }
  }
  for (std::size_t d = 0; d < kStatDim; ++d) {
    stats.stddev[d] = std::sqrt(sq[d] / count[d]);
    if (!(stats.stddev[d] > kMinStd)) {
      throw std::invalid_argument(std::string("zero variance in ") + dim_name(d) + " dimension " + std::to_string(d));
    }
  }
  return stats;
}

FeatureTrack normalize(const FeatureTrack& track, const NormStats& stats) {
  FeatureTrack out = track;
  for (std::size_t t = 0; t < out.frame_count(); ++t) {
    for (std::size_t d = 0; d < kStatDim; ++d) out.at(t, d) = (track.at(t, d) - stats.mean[d]) / stats.stddev[d];
    if (!track.voiced(t)) out.at(t, kLogF0Index) = 0.0;
  }
  return out;
}

FeatureTrack denormalize(const FeatureTrack& track, const NormStats& stats) {
  FeatureTrack out = track;
  for (std::size_t t = 0; t < out.frame_count(); ++t) {
    for (std::size_t d = 0; d < kStatDim; ++d) out.at(t, d) = track.at(t, d) * stats.stddev[d] + stats.mean[d];
    if (!track.voiced(t)) out.at(t, kLogF0Index) = 0.0;
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const FeatureTrack& track) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(track.frame_count()));
  put_u32(out, static_cast<std::uint32_t>(kFrameWidth));
  std::vector<float> buf(track.values().begin(), track.values().end());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

FeatureTrack read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError(path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw FormatError(path.string(), 0, "bad magic");
  const std::uint32_t frames = get_u32(in);
  const std::uint32_t width = get_u32(in);
  if (!in) throw FormatError(path.string(), 0, "truncated header");
  if (width != kFrameWidth) {
    throw FormatError(path.string(), 0, "frame width " + std::to_string(width) + ", expected 43");
  }
  if (frames == 0) throw FormatError(path.string(), 0, "no frames");
  std::vector<float> buf(static_cast<std::size_t>(frames) * kFrameWidth);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw FormatError(path.string(), 0, "truncated frame data");
  FeatureTrack track(frames, std::vector<double>(buf.begin(), buf.end()));
  try {
    track.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string(), 0, e.what());
  }
  return track;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kDev:
      return "dev";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(const std::string& tag) {
  if (tag == "train") return Split::kTrain;
  if (tag == "dev") return Split::kDev;
  if (tag == "test") return Split::kTest;
  throw std::invalid_argument("unknown split tag: " + tag);
}

std::size_t Corpus::speaker_index(const std::string& name) const {
  auto it = std::find(speakers.begin(), speakers.end(), name);
  if (it == speakers.end()) throw std::invalid_argument("unknown speaker: " + name);
  return static_cast<std::size_t>(it - speakers.begin());
}

std::vector<const Utterance*> Corpus::select(Split split) const {
  std::vector<const Utterance*> out;
  for (const auto& u : utterances) {
    if (u.split == split) out.push_back(&u);
  }
  return out;
}

void Corpus::refresh_stats() {
  std::vector<const FeatureTrack*> tracks;
  for (const auto& u : utterances) {
    if (u.split == Split::kTrain) tracks.push_back(&u.track);
  }
  stats = compute_norm_stats(tracks);
}

void Corpus::validate() const {
  frontend.validate();
  if (utterances.empty()) throw std::invalid_argument("corpus has no utterances");
  std::set<std::string> ids;
  for (const auto& u : utterances) {
    if (!ids.insert(u.transcription.id).second) throw std::invalid_argument("duplicate utterance id " + u.transcription.id);
    if (u.sequence.language >= language_count()) throw std::invalid_argument("utterance language out of range");
    if (u.sequence.speaker >= speakers.size()) throw std::invalid_argument("utterance speaker out of range");
    u.track.validate();
  }
  stats.validate();
}

frontend::PhonemeSequence encode_transcription(const frontend::Transcription& t, const frontend::FrontendConfig& cfg,
                                               const std::vector<std::string>& speakers) {
  const std::size_t lang = cfg.language_index(t.language);
  auto it = std::find(speakers.begin(), speakers.end(), t.speaker);
  if (it == speakers.end()) throw std::invalid_argument("unknown speaker: " + t.speaker);
  return frontend::encode_utterance(t.words, t.marks, lang, static_cast<std::size_t>(it - speakers.begin()), cfg);
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "feats");
  nlohmann::json meta = {{"frontend", corpus.frontend},
                         {"speakers", corpus.speakers},
                         {"norm_stats", {{"mean", corpus.stats.mean}, {"std", corpus.stats.stddev}}}};
  {
    std::ofstream out(dir / "corpus.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "corpus.json").string());
    out << meta.dump(2) << '\n';
  }
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& u : corpus.utterances) {
    const std::string rel = "feats/" + u.transcription.id + ".dsam";
    write_feature_file(dir / rel, u.track);
    nlohmann::json line = u.transcription;
    line["features"] = rel;
    line["split"] = to_string(u.split);
    if (!u.durations.empty()) line["durations"] = u.durations;
    manifest << line.dump() << '\n';
  }
}

Corpus load_corpus(const std::filesystem::path& manifest) {
  namespace fs = std::filesystem;
  if (!fs::exists(manifest)) throw MissingFileError(manifest.string());
  const fs::path dir = manifest.parent_path();
  const fs::path meta_path = dir / "corpus.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw MissingFileError(meta_path.string());
  Corpus corpus;
  try {
    const nlohmann::json meta = nlohmann::json::parse(meta_in);
    corpus.frontend = meta.at("frontend").get<frontend::FrontendConfig>();
    corpus.speakers = meta.at("speakers").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string(), 0, e.what());
  }
  corpus.frontend.validate();

  std::ifstream in(manifest);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Utterance u;
    std::string rel;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      u.transcription = frontend::parse_transcription(j);
      rel = j.at("features").get<std::string>();
      u.split = parse_split(j.value("split", std::string("train")));
      if (j.contains("durations")) u.durations = j.at("durations").get<std::vector<std::size_t>>();
      u.sequence = encode_transcription(u.transcription, corpus.frontend, corpus.speakers);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest.string(), lineno, e.what());
    } catch (const std::invalid_argument& e) {
      throw FormatError(manifest.string(), lineno, e.what());
    }
    if (!fs::exists(dir / rel)) throw MissingFileError((dir / rel).string());
    try {
      u.track = read_feature_file(dir / rel);
    } catch (const FormatError& e) {
      throw FormatError(manifest.string(), lineno, e.what());
    }
    corpus.utterances.push_back(std::move(u));
  }
  if (corpus.utterances.empty()) throw FormatError(manifest.string(), 0, "no utterances");
  corpus.refresh_stats();
  return corpus;
}

}  // namespace dsam::features
