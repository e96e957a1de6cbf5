#include "dsam/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "dsam/errors.hpp"
#include "dsam/features.hpp"
#include "dsam/metrics/metrics.hpp"
#include "dsam/model/checkpoint.hpp"
#include "dsam/model/encodings.hpp"
#include "dsam/run_config.hpp"
#include "dsam/synthetic.hpp"
#include "dsam/training/trainer.hpp"

namespace dsam::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

RunConfig resolve_config(const CommonOptions& o) {
  nlohmann::json doc = nlohmann::json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw MissingFileError(o.config);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
  }
  for (const auto& a : o.overrides) apply_override(doc, a);
  if (o.seed) doc["seed"] = *o.seed;
  return run_config_from_json(doc);
}

std::string require_path(const std::string& flag_value, const std::string& config_value, const char* flag) {
  const std::string& v = flag_value.empty() ? config_value : flag_value;
  if (v.empty()) throw ConfigError(std::string("missing required option ") + flag);
  return v;
}

// Output files a command owns inside --out. Existing ones are only replaced
// with --force; nothing else in the directory is touched.
void prepare_out(const fs::path& dir, const std::vector<fs::path>& owned, const std::vector<std::string>& suffixes,
                 bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError("--out " + dir.string() + " is not a directory");
  std::vector<fs::path> existing;
  for (const auto& p : owned) {
    if (fs::exists(dir / p)) existing.push_back(dir / p);
  }
  if (fs::exists(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      for (const auto& s : suffixes) {
        if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
          existing.push_back(entry.path());
          break;
        }
      }
    }
  }
  if (!existing.empty() && !force) {
    throw ConfigError("refusing to overwrite " + existing.front().string() + " (pass --force)");
  }
  for (const auto& p : existing) fs::remove_all(p);
  fs::create_directories(dir);
}

fs::path manifest_path(const std::string& data) {
  fs::path p(data);
  if (fs::is_directory(p)) p /= "manifest.jsonl";
  if (!fs::exists(p)) throw MissingFileError(p.string());
  return p;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

void check_compatible(const model::Checkpoint& ckpt, const features::Corpus& corpus) {
  if (nlohmann::json(ckpt.frontend) != nlohmann::json(corpus.frontend) || ckpt.speakers != corpus.speakers) {
    throw ConfigError("checkpoint and data use different inventories, languages or speakers");
  }
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config) {
  if (with_config) {
    cmd->add_option("--config", o.config, "Run configuration JSON");
    cmd->add_option("--set", o.overrides, "Override a config value, e.g. train.lambda=0.1 (repeatable)");
    cmd->add_option("--seed", o.seed, "Seed for every random draw of the command");
  }
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_flag("--force", o.force, "Replace this command's existing outputs in --out");
}

int gen_data(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = resolve_config(o);
  const fs::path dir = require_path(o.out, cfg.paths.out, "--out");
  features::Corpus corpus = synthetic::generate_synthetic_corpus(cfg.generator, cfg.seed);
  if (!cfg.frontend.tone_names.empty()) corpus.frontend.tone_names = cfg.frontend.tone_names;
  if (!cfg.frontend.stress_names.empty()) corpus.frontend.stress_names = cfg.frontend.stress_names;
  prepare_out(dir, {"corpus.json", "manifest.jsonl", "feats", "config.json"}, {}, o.force);
  features::save_corpus(corpus, dir);
  write_json(dir / "config.json", nlohmann::json(cfg));
  out << "wrote " << corpus.utterances.size() << " utterances to " << dir.string() << '\n';
  return kExitOk;
}

int train(const CommonOptions& o, const std::string& data, std::optional<std::size_t> steps, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  const fs::path dir = require_path(o.out, cfg.paths.out, "--out");
  const features::Corpus corpus = features::load_corpus(manifest_path(require_path(data, cfg.paths.data, "--data")));
  model::size_for_corpus(cfg.model, corpus);
  try {
    cfg.model.validate();
    cfg.train.validate(corpus.language_count());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::size_t total = steps.value_or(cfg.train.max_steps);

  std::mt19937_64 master(cfg.seed);
  const std::uint64_t model_seed = master();
  cfg.train.seed = master();

  prepare_out(dir, {"train_log.csv", "config.json"}, {".ckpt"}, o.force);
  write_json(dir / "config.json", nlohmann::json(cfg));

  model::AcousticModel model(cfg.model, model_seed);
  training::Trainer trainer(model, corpus, cfg.train);
  std::ofstream log(dir / "train_log.csv");
  training::write_log_header(log);

  auto save = [&](const fs::path& path) {
    model::Checkpoint ckpt;
    ckpt.model = cfg.model;
    ckpt.params = model.params();
    ckpt.frontend = corpus.frontend;
    ckpt.speakers = corpus.speakers;
    ckpt.stats = corpus.stats;
    ckpt.step = trainer.steps_done();
    ckpt.run_config = nlohmann::json(cfg);
    model::save_checkpoint(path, ckpt);
  };

  for (std::size_t s = 0; s < total; ++s) {
    const training::LogRow row = trainer.step();
    if (row.step % cfg.train.log_every == 0 || s + 1 == total) {
      training::write_log_row(log, row);
      log.flush();
    }
    if (cfg.train.checkpoint_every > 0 && trainer.steps_done() % cfg.train.checkpoint_every == 0 &&
        s + 1 != total) {
      save(dir / ("checkpoint_step" + std::to_string(trainer.steps_done()) + ".ckpt"));
    }
  }
  save(dir / "checkpoint.ckpt");
  out << "trained " << total << " steps; checkpoint " << (dir / "checkpoint.ckpt").string() << '\n';
  return kExitOk;
}

int synth(const CommonOptions& o, const std::string& checkpoint, const std::string& input, std::size_t max_frames,
          std::ostream& out) {
  if (o.out.empty()) throw ConfigError("missing required option --out");
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
  const model::AcousticModel model = model::model_from_checkpoint(ckpt);
  if (!fs::exists(input)) throw MissingFileError(input);
  const auto items = frontend::read_transcriptions(input);
  std::vector<frontend::PhonemeSequence> sequences;
  for (const auto& t : items) {
    try {
      sequences.push_back(features::encode_transcription(t, ckpt.frontend, ckpt.speakers));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(input + ": utterance " + t.id + ": " + e.what());
    }
  }
  prepare_out(o.out, {"synth_manifest.jsonl"}, {".dsam"}, o.force);
  std::ofstream manifest(fs::path(o.out) / "synth_manifest.jsonl");
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto result = model.synthesize(sequences[i], max_frames, &ckpt.stats);
    const std::string file = items[i].id + ".dsam";
    features::write_feature_file(fs::path(o.out) / file, result.track);
    manifest << nlohmann::json{{"id", items[i].id},
                               {"features", file},
                               {"frames", result.track.frame_count()},
                               {"truncated", result.truncated}}
                    .dump()
             << '\n';
  }
  out << "synthesized " << items.size() << " utterances to " << o.out << '\n';
  return kExitOk;
}

int eval(const CommonOptions& o, const std::string& checkpoint, const std::string& data, const std::string& split,
         const std::string& mode, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("missing required option --out");
  if (data.empty()) throw ConfigError("missing required option --data");
  features::Split which;
  metrics::EvalMode how;
  try {
    which = features::parse_split(split);
    how = metrics::parse_eval_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
  features::Corpus corpus = features::load_corpus(manifest_path(data));
  check_compatible(ckpt, corpus);
  corpus.stats = ckpt.stats;
  const model::AcousticModel model = model::model_from_checkpoint(ckpt);
  const metrics::EvalReport report = metrics::evaluate(model, corpus, which, how);
  prepare_out(o.out, {"report.csv", "utterances.csv", "report.txt"}, {}, o.force);
  std::ofstream csv(fs::path(o.out) / "report.csv");
  metrics::write_report_csv(csv, report);
  std::ofstream utt(fs::path(o.out) / "utterances.csv");
  metrics::write_utterance_csv(utt, report);
  const std::string table = metrics::format_table(report);
  std::ofstream(fs::path(o.out) / "report.txt") << table;
  out << table;
  return kExitOk;
}

int dump_encodings(const CommonOptions& o, const std::string& checkpoint, const std::string& data,
                   const std::string& stream, const std::string& split, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("missing required option --out");
  if (data.empty()) throw ConfigError("missing required option --data");
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint);
  const features::Corpus corpus = features::load_corpus(manifest_path(data));
  check_compatible(ckpt, corpus);
  model::Stream which;
  std::vector<const features::Utterance*> selected;
  try {
    which = model::parse_stream(stream);
    if (split == "all") {
      for (const auto& u : corpus.utterances) selected.push_back(&u);
    } else {
      selected = corpus.select(features::parse_split(split));
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (ckpt.model.single_stream != (which == model::Stream::kJoint)) {
    throw ConfigError("stream " + stream + " is not part of this checkpoint's model");
  }
  if (selected.empty()) throw ConfigError("split " + split + " is empty");
  const model::AcousticModel model = model::model_from_checkpoint(ckpt);
  const auto rows = model::collect_encodings(model, selected, which, corpus.frontend);
  prepare_out(o.out, {"encodings.tsv"}, {}, o.force);
  model::write_encodings(fs::path(o.out) / "encodings.tsv", rows);
  out << "wrote " << rows.size() << " encodings to " << (fs::path(o.out) / "encodings.tsv").string() << '\n';
  return kExitOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stream multilingual acoustic model toolkit", "dsam"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, synth_o, eval_o, dump_o;
  std::string train_data, synth_ckpt, synth_input, eval_ckpt, eval_data, eval_split = "test", eval_mode = "teacher-forced";
  std::string dump_ckpt, dump_data, dump_stream, dump_split = "all";
  std::optional<std::size_t> train_steps;
  std::size_t max_frames = 1000;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multilingual corpus");
  add_common(gen, gen_o, true);

  auto* tr = app.add_subcommand("train", "Train a model on a corpus");
  add_common(tr, train_o, true);
  tr->add_option("--data", train_data, "Corpus directory or manifest.jsonl");
  tr->add_option("--steps", train_steps, "Optimizer steps (default: train.max_steps)");

  auto* sy = app.add_subcommand("synth", "Synthesize feature files from transcriptions");
  add_common(sy, synth_o, false);
  sy->add_option("--checkpoint", synth_ckpt, "Checkpoint file")->required();
  sy->add_option("--input", synth_input, "Transcription JSON-lines file")->required();
  sy->add_option("--max-frames", max_frames, "Frame limit per utterance")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("eval", "Objective evaluation of a checkpoint");
  add_common(ev, eval_o, false);
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", eval_data, "Corpus directory or manifest.jsonl");
  ev->add_option("--split", eval_split, "train, dev or test");
  ev->add_option("--mode", eval_mode, "teacher-forced or free-running");

  auto* du = app.add_subcommand("dump-encodings", "Write per-phoneme encoder outputs");
  add_common(du, dump_o, false);
  du->add_option("--checkpoint", dump_ckpt, "Checkpoint file")->required();
  du->add_option("--data", dump_data, "Corpus directory or manifest.jsonl");
  du->add_option("--stream", dump_stream, "pronunciation, prosody or joint")->required();
  du->add_option("--split", dump_split, "train, dev, test or all");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "dsam: error[config]: " << one_line(e.what()) << '\n';
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return gen_data(gen_o, out);
    if (tr->parsed()) return train(train_o, train_data, train_steps, out);
    if (sy->parsed()) return synth(synth_o, synth_ckpt, synth_input, max_frames, out);
    if (ev->parsed()) return eval(eval_o, eval_ckpt, eval_data, eval_split, eval_mode, out);
    if (du->parsed()) return dump_encodings(dump_o, dump_ckpt, dump_data, dump_stream, dump_split, out);
  } catch (const ConfigError& e) {
    err << "dsam: error[config]: " << one_line(e.what()) << '\n';
    return kExitConfig;
  } catch (const MissingFileError& e) {
    err << "dsam: error[missing-file]: " << one_line(e.what()) << '\n';
    return kExitMissingFile;
  } catch (const std::exception& e) {
    err << "dsam: error[runtime]: " << one_line(e.what()) << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace dsam::cli
