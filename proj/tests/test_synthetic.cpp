#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dsam/errors.hpp"
#include "dsam/features.hpp"
#include "dsam/synthetic.hpp"

namespace ft = dsam::features;
namespace sy = dsam::synthetic;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dsam_synthetic_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Calls fn(utterance, token index, frame index) for every frame.
template <typename Fn>
void for_each_frame(const ft::Corpus& corpus, Fn fn) {
  for (const auto& u : corpus.utterances) {
    std::size_t frame = 0;
    for (std::size_t i = 0; i < u.sequence.length(); ++i) {
      for (std::size_t k = 0; k < u.durations[i]; ++k) fn(u, i, frame++);
    }
    ASSERT_EQ(frame, u.track.frame_count());
  }
}

}  // namespace

TEST(Synthetic, SameSeedGivesByteIdenticalCorpora) {
  const auto cfg = sy::GeneratorConfig::desk_default();
  const auto a = temp_dir("a");
  const auto b = temp_dir("b");
  ft::save_corpus(sy::generate_synthetic_corpus(cfg, 42), a);
  ft::save_corpus(sy::generate_synthetic_corpus(cfg, 42), b);
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a);
    ASSERT_TRUE(std::filesystem::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 2u + 8u);
}

TEST(Synthetic, DifferentSeedsDiffer) {
  const auto cfg = sy::GeneratorConfig::desk_default();
  const auto a = sy::generate_synthetic_corpus(cfg, 1);
  const auto b = sy::generate_synthetic_corpus(cfg, 2);
  bool differ = false;
  for (std::size_t i = 0; i < a.utterances.size() && !differ; ++i) {
    differ = a.utterances[i].track.values() != b.utterances[i].track.values();
  }
  EXPECT_TRUE(differ);
}

TEST(Synthetic, McepDependsOnPhonemeOnly) {
  auto cfg = sy::GeneratorConfig::desk_default();
  cfg.mcep_noise = 0.0;
  cfg.utterances_per_language = 20;
  const auto corpus = sy::generate_synthetic_corpus(cfg, 3);
  std::map<std::size_t, std::vector<double>> first;
  std::set<std::size_t> languages_of_a;
  const std::size_t a_token = corpus.frontend.token_of("a");
  std::size_t checked = 0;
  for_each_frame(corpus, [&](const ft::Utterance& u, std::size_t i, std::size_t f) {
    const std::size_t token = u.sequence.tokens[i];
    const auto frame = u.track.frame(f);
    std::vector<double> mcep(frame.begin(), frame.begin() + ft::kMcepDim);
    auto [it, inserted] = first.emplace(token, mcep);
    if (!inserted) {
      EXPECT_EQ(it->second, mcep);
      ++checked;
    }
    if (token == a_token) languages_of_a.insert(u.sequence.language);
  });
  EXPECT_GT(checked, 100u);
  EXPECT_EQ(languages_of_a.size(), 2u);
  const auto templates = sy::make_templates(cfg, 3);
  const auto& ta = templates.phoneme.at("a");
  for (std::size_t d = 0; d < ft::kMcepDim; ++d) EXPECT_FLOAT_EQ(first.at(a_token)[d], ta[d]);
}

TEST(Synthetic, LogF0DependsOnProsodyLabelAndSpeakerOnly) {
  auto cfg = sy::GeneratorConfig::desk_default();
  cfg.utterances_per_language = 20;
  const auto corpus = sy::generate_synthetic_corpus(cfg, 4);
  // (label, speaker, frame-within-phoneme) -> logF0, across different phonemes.
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, double> seen;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::set<std::size_t>> phonemes;
  std::size_t pos = 0;
  std::size_t last_token = SIZE_MAX;
  for_each_frame(corpus, [&](const ft::Utterance& u, std::size_t i, std::size_t f) {
    pos = (i == last_token) ? pos + 1 : 0;
    last_token = i;
    if (!u.track.voiced(f)) return;
    const auto key = std::make_tuple(u.sequence.labels[i], u.sequence.speaker, pos);
    auto [it, inserted] = seen.emplace(key, u.track.logf0(f));
    if (!inserted) EXPECT_EQ(it->second, u.track.logf0(f));
    phonemes[key].insert(u.sequence.tokens[i]);
  });
  std::size_t shared = 0;
  for (const auto& [key, set] : phonemes) shared += set.size() > 1;
  EXPECT_GT(shared, 5u);
}

TEST(Synthetic, ToneShapesDifferOnSamePhoneme) {
  const auto fc = sy::GeneratorConfig::desk_default().frontend_config();
  for (std::size_t t = 0; t < fc.tone_count(); ++t) {
    for (std::size_t s = t + 1; s < fc.tone_count(); ++s) {
      double diff = 0.0;
      for (double u : {0.1, 0.5, 0.9}) {
        diff += std::abs(sy::prosody_contour(t, u, fc).logf0_offset - sy::prosody_contour(s, u, fc).logf0_offset);
      }
      EXPECT_GT(diff, 1e-3) << t << " vs " << s;
    }
  }
}

TEST(Synthetic, VoicingFollowsPhonemeClass) {
  const auto cfg = sy::GeneratorConfig::desk_default();
  const auto corpus = sy::generate_synthetic_corpus(cfg, 6);
  for_each_frame(corpus, [&](const ft::Utterance& u, std::size_t i, std::size_t f) {
    const std::size_t token = u.sequence.tokens[i];
    bool expect_voiced = token != dsam::frontend::kBoundaryToken;
    if (expect_voiced) {
      const auto sym = corpus.frontend.symbol_of(token);
      expect_voiced = std::find(cfg.unvoiced_consonants.begin(), cfg.unvoiced_consonants.end(), sym) ==
                      cfg.unvoiced_consonants.end();
    }
    EXPECT_EQ(u.track.voiced(f), expect_voiced);
  });
}

TEST(Synthetic, SplitsPartitionTheCorpus) {
  auto cfg = sy::GeneratorConfig::desk_default();
  cfg.utterances_per_language = 20;
  const auto corpus = sy::generate_synthetic_corpus(cfg, 7);
  const auto train = corpus.select(ft::Split::kTrain);
  const auto dev = corpus.select(ft::Split::kDev);
  const auto test = corpus.select(ft::Split::kTest);
  EXPECT_EQ(train.size() + dev.size() + test.size(), corpus.utterances.size());
  EXPECT_EQ(train.size(), 32u);
  EXPECT_EQ(dev.size(), 4u);
  EXPECT_EQ(test.size(), 4u);
  std::set<const ft::Utterance*> all(train.begin(), train.end());
  all.insert(dev.begin(), dev.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), corpus.utterances.size());
}

TEST(Synthetic, GeneratedCorpusIsValid) {
  for (const auto& cfg : {sy::GeneratorConfig::desk_default(), sy::GeneratorConfig::five_languages()}) {
    const auto corpus = sy::generate_synthetic_corpus(cfg, 8);
    EXPECT_NO_THROW(corpus.validate());
    EXPECT_EQ(corpus.language_count(), cfg.languages.size());
    for (const auto& u : corpus.utterances) EXPECT_NO_THROW(u.track.validate());
  }
}

TEST(Synthetic, RejectsInvalidSpecs) {
  auto cfg = sy::GeneratorConfig::desk_default();
  cfg.languages[1].symbols = {"e", "o", "d", "n", "k", "l"};
  EXPECT_THROW(sy::generate_synthetic_corpus(cfg, 1), dsam::ConfigError);
  cfg = sy::GeneratorConfig::desk_default();
  cfg.min_duration = 4;
  cfg.max_duration = 2;
  EXPECT_THROW(cfg.validate(), dsam::ConfigError);
  cfg = sy::GeneratorConfig::desk_default();
  cfg.speakers.clear();
  EXPECT_THROW(cfg.validate(), dsam::ConfigError);
}

TEST(Synthetic, ConfigJsonRoundTripAndUnknownKeys) {
  auto cfg = sy::GeneratorConfig::five_languages();
  cfg.mcep_noise = 0.125;
  nlohmann::json j = cfg;
  sy::GeneratorConfig back = sy::GeneratorConfig::desk_default();
  sy::from_json(j, back);
  EXPECT_EQ(nlohmann::json(back), j);
  nlohmann::json bad = {{"mcep_noise", 0.1}, {"colour", "blue"}};
  EXPECT_THROW(sy::from_json(bad, back), dsam::ConfigError);
  sy::GeneratorConfig partial = sy::GeneratorConfig::desk_default();
  sy::from_json(nlohmann::json{{"utterances_per_language", 6}}, partial);
  EXPECT_EQ(partial.utterances_per_language, 6u);
  EXPECT_EQ(partial.languages.size(), 2u);
}
