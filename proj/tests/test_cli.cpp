#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "dsam/cli.hpp"
#include "dsam/features.hpp"
#include "dsam/model/encodings.hpp"
#include "dsam/training/trainer.hpp"

namespace fs = std::filesystem;
namespace cli = dsam::cli;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dsam_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dsam");
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Ten utterances per language and a model small enough for a unit test.
fs::path small_config(const fs::path& dir) {
  const fs::path path = dir / "run.json";
  std::ofstream out(path);
  out << R"({
    "seed": 4,
    "generator": {"utterances_per_language": 10, "max_words": 2},
    "model": {"pron_dim": 4, "pros_dim": 3, "ipa_embed": 4, "prosody_embed": 3, "language_embed": 2,
              "speaker_embed": 2, "prenet_dim": 4, "attention_lstm": 6, "attention_dim": 4,
              "location_filters": 2, "location_width": 3, "pron_decoder": 6, "pros_decoder": 4,
              "classifier_hidden": 4},
    "train": {"batch_size": 2, "max_steps": 3}
  })";
  return path;
}

std::size_t line_count(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  const auto none = run({});
  EXPECT_EQ(none.code, cli::kExitConfig);
  EXPECT_EQ(line_count(none.err), 1u);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(run({"train", "--bogus"}).code, cli::kExitConfig);
}

TEST(Cli, BadConfigExitsTwoAndMissingFilesExitThree) {
  const auto dir = temp_dir("errors");
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"train": {"lamda": 1}})";
  }
  const auto r = run({"gen-data", "--config", (dir / "bad.json").string(), "--out", (dir / "d").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_EQ(line_count(r.err), 1u);
  EXPECT_NE(r.err.find("lamda"), std::string::npos);
  EXPECT_EQ(run({"gen-data", "--config", (dir / "absent.json").string(), "--out", (dir / "d").string()}).code,
            cli::kExitMissingFile);
  EXPECT_EQ(run({"eval", "--checkpoint", (dir / "none.ckpt").string(), "--data", dir.string(), "--out",
                 (dir / "e").string()})
                .code,
            cli::kExitMissingFile);
  EXPECT_EQ(run({"train", "--data", (dir / "nowhere").string(), "--out", (dir / "t").string()}).code,
            cli::kExitMissingFile);
  EXPECT_EQ(run({"gen-data"}).code, cli::kExitConfig);  // no --out anywhere
  EXPECT_EQ(run({"gen-data", "--set", "train.lambda", "--out", (dir / "d").string()}).code, cli::kExitConfig);
}

TEST(Cli, GenDataIsDeterministicAndRefusesToOverwrite) {
  const auto dir = temp_dir("gen");
  const auto cfg = small_config(dir).string();
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", (dir / "a").string()}).code, cli::kExitOk);
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", (dir / "b").string()}).code, cli::kExitOk);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir / "a");
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 20u);

  const auto again = run({"gen-data", "--config", cfg, "--out", (dir / "a").string()});
  EXPECT_EQ(again.code, cli::kExitConfig);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  EXPECT_EQ(run({"gen-data", "--config", cfg, "--out", (dir / "a").string(), "--force"}).code, cli::kExitOk);

  // A different seed changes the corpus.
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--seed", "99", "--out", (dir / "c").string()}).code, cli::kExitOk);
  EXPECT_NE(slurp(dir / "a" / "manifest.jsonl") + slurp(dir / "a" / "feats" / "xa_000.dsam"),
            slurp(dir / "c" / "manifest.jsonl") + slurp(dir / "c" / "feats" / "xa_000.dsam"));
}

TEST(Cli, TrainOneStepWritesOneLogRow) {
  const auto dir = temp_dir("train1");
  const auto cfg = small_config(dir).string();
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", (dir / "data").string()}).code, cli::kExitOk);
  const auto r = run({"train", "--config", cfg, "--data", (dir / "data").string(), "--out", (dir / "run").string(),
                      "--steps", "1"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto log = dsam::training::read_log_csv(dir / "run" / "train_log.csv");
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].step, 0u);
  EXPECT_TRUE(fs::exists(dir / "run" / "checkpoint.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));
}

TEST(Cli, TrainRejectsIndivisibleBatchFromOverride) {
  const auto dir = temp_dir("train_bad");
  const auto cfg = small_config(dir).string();
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", (dir / "data").string()}).code, cli::kExitOk);
  const auto r = run({"train", "--config", cfg, "--set", "train.batch_size=3", "--data", (dir / "data").string(),
                      "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_FALSE(fs::exists(dir / "run" / "train_log.csv"));
}

TEST(Cli, FullPipeline) {
  const auto dir = temp_dir("pipeline");
  const auto cfg = small_config(dir).string();
  const auto data = (dir / "data").string();
  ASSERT_EQ(run({"gen-data", "--config", cfg, "--out", data}).code, cli::kExitOk);
  const auto tr = run({"train", "--config", cfg, "--data", data, "--out", (dir / "run").string()});
  ASSERT_EQ(tr.code, cli::kExitOk) << tr.err;
  EXPECT_EQ(dsam::training::read_log_csv(dir / "run" / "train_log.csv").size(), 3u);
  const auto ckpt = (dir / "run" / "checkpoint.ckpt").string();

  for (const char* mode : {"teacher-forced", "free-running"}) {
    const auto out = (dir / (std::string("eval_") + mode)).string();
    const auto ev = run({"eval", "--checkpoint", ckpt, "--data", data, "--split", "test", "--mode", mode, "--out", out});
    ASSERT_EQ(ev.code, cli::kExitOk) << ev.err;
    EXPECT_TRUE(fs::exists(fs::path(out) / "report.csv"));
    EXPECT_EQ(line_count(slurp(fs::path(out) / "report.csv")), 1u + 2u + 1u);
    EXPECT_NE(ev.out.find("overall"), std::string::npos);
  }
  EXPECT_EQ(run({"eval", "--checkpoint", ckpt, "--data", data, "--mode", "greedy", "--out", (dir / "x").string()}).code,
            cli::kExitConfig);

  const auto enc = run({"dump-encodings", "--checkpoint", ckpt, "--data", data, "--stream", "prosody", "--out",
                        (dir / "enc").string()});
  ASSERT_EQ(enc.code, cli::kExitOk) << enc.err;
  const auto rows = dsam::model::read_encodings(dir / "enc" / "encodings.tsv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.front().vector.size(), 3u);
  EXPECT_EQ(run({"dump-encodings", "--checkpoint", ckpt, "--data", data, "--stream", "joint", "--out",
                 (dir / "enc2").string()})
                .code,
            cli::kExitConfig);

  {
    std::ofstream in(dir / "input.jsonl");
    in << R"({"id":"s1","language":"xa","speaker":"s0","words":[["a"]],"marks":[["tone1"]]})" << '\n';
  }
  const auto sy = run({"synth", "--checkpoint", ckpt, "--input", (dir / "input.jsonl").string(), "--max-frames", "12",
                       "--out", (dir / "synth").string()});
  ASSERT_EQ(sy.code, cli::kExitOk) << sy.err;
  const auto track = dsam::features::read_feature_file(dir / "synth" / "s1.dsam");
  EXPECT_GE(track.frame_count(), 1u);
  EXPECT_LE(track.frame_count(), 12u);
}
