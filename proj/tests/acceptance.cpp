// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero if
// any selected criterion fails. Thresholds are fixed below.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dsam/autodiff/gradcheck.hpp"
#include "dsam/autodiff/ops.hpp"
#include "dsam/features.hpp"
#include "dsam/metrics/metrics.hpp"
#include "dsam/model/encodings.hpp"
#include "dsam/model/model.hpp"
#include "dsam/synthetic.hpp"
#include "dsam/training/trainer.hpp"
#include "toy_model.hpp"

namespace ad = dsam::ad;
namespace ft = dsam::features;
namespace md = dsam::model;
namespace mt = dsam::metrics;
namespace sy = dsam::synthetic;
namespace tr = dsam::training;
namespace fs = std::filesystem;

namespace {

// ---- pinned thresholds -----------------------------------------------------
constexpr double kFdTolerance = 1e-4;
constexpr double kFdEps = 1e-2;  // five-point stencil
constexpr double kFdSeconds = 60.0;
constexpr std::size_t kToyMaxWidth = 8;
constexpr std::size_t kToyMaxTokens = 4;
constexpr std::size_t kToyMaxFrames = 8;
constexpr double kLambda = 0.05;
constexpr double kIdentityTolerance = 1e-9;
constexpr double kGrlTolerance = 1e-10;
constexpr double kAlignmentTolerance = 1e-9;
constexpr double kOverfitTarget = 0.05;
constexpr std::size_t kOverfitMaxSteps = 3000;
constexpr std::size_t kOverfitBatch = 8;
constexpr double kOverfitSeconds = 15.0 * 60.0;
constexpr std::size_t kRequiredSeeds = 4;
constexpr double kProbeMarginPoints = 10.0;
constexpr std::size_t kAblationSteps = 1000;
constexpr double kMcdTolerance = 1e-9;
constexpr double kCorrTolerance = 1e-12;
constexpr std::size_t kScheduleSteps = 45001;
constexpr std::size_t kBalanceBatches = 200;

const std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
constexpr std::uint64_t kOverfitCorpusSeed = 7;
constexpr std::uint64_t kProbeCorpusSeed = 1234;
constexpr std::uint64_t kAblationCorpusSeed = 99;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

md::ModelConfig desk_model(const ft::Corpus& corpus, bool single_stream = false) {
  md::ModelConfig cfg;
  cfg.single_stream = single_stream;
  md::size_for_corpus(cfg, corpus);
  return cfg;
}

// The 2-language, 2-speaker, 8-utterance corpus.
ft::Corpus overfit_corpus() {
  auto gc = sy::GeneratorConfig::desk_default();
  gc.utterances_per_language = 4;
  gc.split_ratio = {1, 0, 0};
  return sy::generate_synthetic_corpus(gc, kOverfitCorpusSeed);
}

// ---- shared overfit runs -----------------------------------------------------

struct OverfitRun {
  std::uint64_t seed = 0;
  std::unique_ptr<md::AcousticModel> model;
  std::vector<tr::LogRow> log;
  std::optional<std::size_t> reached_at;
  double seconds = 0.0;
};

struct OverfitRuns {
  ft::Corpus corpus;
  std::vector<OverfitRun> runs;
  double seconds = 0.0;
};

const OverfitRuns& overfit_runs() {
  static std::unique_ptr<OverfitRuns> cache;
  if (cache) return *cache;
  cache = std::make_unique<OverfitRuns>();
  cache->corpus = overfit_corpus();
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed : kSeeds) {
    OverfitRun run;
    run.seed = seed;
    run.model = std::make_unique<md::AcousticModel>(desk_model(cache->corpus), seed);
    tr::TrainConfig tc;
    tc.batch_size = kOverfitBatch;
    tc.seed = seed;
    tr::Trainer trainer(*run.model, cache->corpus, tc);
    const auto start = std::chrono::steady_clock::now();
    // The batch is the whole corpus, so the logged pre-update loss is the
    // full-corpus loss at that step.
    for (std::size_t s = 0; s < kOverfitMaxSteps; ++s) {
      run.log.push_back(trainer.step());
      if (run.log.back().loss.loss_rec < kOverfitTarget) {
        run.reached_at = s;
        break;
      }
    }
    run.seconds = seconds_since(start);
    std::fprintf(stderr, "  overfit seed %llu: %s after %zu steps, %.1fs\n", static_cast<unsigned long long>(seed),
                 run.reached_at ? "reached" : "not reached", run.log.size(), run.seconds);
    cache->runs.push_back(std::move(run));
  }
  cache->seconds = seconds_since(t0);
  return *cache;
}

// ---- criteria ----------------------------------------------------------------

Outcome criterion1() {
  const auto corpus = dsam::testing::toy_corpus();
  const auto cfg = dsam::testing::toy_config(corpus);
  std::size_t max_width = 0;
  for (std::size_t w : {cfg.pron_dim, cfg.pros_dim, cfg.ipa_embed, cfg.prosody_embed, cfg.language_embed,
                        cfg.speaker_embed, cfg.prenet_dim, cfg.attention_lstm, cfg.attention_dim, cfg.location_filters,
                        cfg.location_width, cfg.pron_decoder, cfg.pros_decoder, cfg.classifier_hidden, cfg.joint_dim(),
                        cfg.label_width}) {
    max_width = std::max(max_width, w);
  }
  std::size_t max_tokens = 0, max_frames = 0;
  for (const auto& u : corpus.utterances) {
    max_tokens = std::max(max_tokens, u.sequence.length());
    max_frames = std::max(max_frames, u.track.frame_count());
  }
  md::AcousticModel m(cfg, 17);
  dsam::testing::perturb_generators(m, 18);
  const auto problem = dsam::testing::toy_problem(corpus);
  ad::GradCheckOptions options;
  options.eps = kFdEps;
  options.five_point = true;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report =
      ad::finite_difference_check(dsam::testing::total_loss_fn(m, corpus, problem, kLambda), m.params(), options);
  const double elapsed = seconds_since(t0);
  const bool sized = max_width <= kToyMaxWidth && max_tokens <= kToyMaxTokens && max_frames <= kToyMaxFrames;
  return {sized && report.max_relative_error < kFdTolerance && elapsed < kFdSeconds,
          fmt("max rel err %.3e over %zu params (worst %s[%zu]), %.1fs; widths<=%zu L<=%zu T<=%zu",
              report.max_relative_error, report.checked, report.worst_param.c_str(), report.worst_index, elapsed,
              max_width, max_tokens, max_frames)};
}

Outcome criterion2() {
  const auto& runs = overfit_runs();
  double worst = 0.0;
  std::size_t rows = 0;
  for (const auto& run : runs.runs) {
    for (const auto& row : run.log) {
      worst = std::max(worst, std::abs(row.loss.loss_total - (row.loss.loss_rec - kLambda * row.loss.loss_spk)));
      ++rows;
    }
  }
  // The same identity must survive the CSV log format.
  const fs::path dir = fs::temp_directory_path() / "dsam_acceptance_log";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "log.csv");
    tr::write_log_header(out);
    for (const auto& row : runs.runs.front().log) tr::write_log_row(out, row);
  }
  for (const auto& row : tr::read_log_csv(dir / "log.csv")) {
    worst = std::max(worst, std::abs(row.loss.loss_total - (row.loss.loss_rec - kLambda * row.loss.loss_spk)));
  }
  return {rows > 0 && worst < kIdentityTolerance, fmt("max |total-(rec-0.05*spk)| = %.3e over %zu logged steps", worst, rows)};
}

Outcome criterion3() {
  const auto corpus = overfit_corpus();
  md::AcousticModel m(desk_model(corpus), 3);
  double worst = 0.0;
  for (double lambda : {0.01, 0.05, 1.0}) {
    for (const auto& u : corpus.utterances) {
      const std::vector<std::size_t> labels(u.sequence.length(), u.sequence.speaker);
      ad::Graph g(&m.params());
      ad::Var x = g.input(m.encode_all(g, u.sequence).joint.value());
      g.backward(ad::cross_entropy_logits(m.speaker_logits(g, x, lambda), labels));
      const ad::Tensor through = g.grad(x);

      ad::Graph h(&m.params());
      ad::Var y = h.input(x.value());
      h.backward(ad::scale(ad::cross_entropy_logits(m.speaker_classifier(h, y), labels), -lambda));
      const ad::Tensor direct = h.grad(y);
      for (std::size_t i = 0; i < through.size(); ++i) worst = std::max(worst, std::abs(through[i] - direct[i]));
    }
  }
  return {worst < kGrlTolerance, fmt("max abs diff %.3e for lambda in {0.01, 0.05, 1.0}", worst)};
}

Outcome criterion4() {
  auto check = [](const md::AcousticModel& m, const ft::Corpus& corpus, double& worst, std::size_t& rows) {
    for (const auto& u : corpus.utterances) {
      ad::Graph g(&m.params());
      const auto out = m.teacher_forced(g, u.sequence, ft::normalize(u.track, corpus.stats), kLambda);
      for (const auto& a : out.alignments) {
        double s = 0.0;
        for (double v : a.value().values()) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
        ++rows;
      }
    }
  };
  double worst = 0.0;
  std::size_t rows = 0;
  const auto corpus = overfit_corpus();
  for (bool single : {false, true}) check(md::AcousticModel(desk_model(corpus, single), 4), corpus, worst, rows);
  const auto& runs = overfit_runs();
  for (const auto& run : runs.runs) check(*run.model, runs.corpus, worst, rows);
  return {worst < kAlignmentTolerance, fmt("max |row sum - 1| = %.3e over %zu alignment rows", worst, rows)};
}

Outcome criterion5() {
  const auto& runs = overfit_runs();
  std::size_t reached = 0;
  std::string per_seed;
  for (const auto& run : runs.runs) {
    reached += run.reached_at.has_value();
    per_seed += fmt(" seed%llu=%s", static_cast<unsigned long long>(run.seed),
                    run.reached_at ? std::to_string(*run.reached_at).c_str() : "miss");
  }
  return {reached >= kRequiredSeeds && runs.seconds < kOverfitSeconds,
          fmt("%zu/5 seeds reach loss_rec<0.05 within %zu steps (step:%s), %.0fs total", reached, kOverfitMaxSteps,
              per_seed.c_str(), runs.seconds)};
}

using LabelFn = std::function<std::string(const md::EncodingRow&)>;

// Least-squares one-hot probe with leave-one-utterance-out folds: each
// utterance's rows are predicted by a probe fit on all other utterances.
// Features are z-scored on the fitting rows; argmax picks the class.
double probe_accuracy(const std::vector<md::EncodingRow>& rows, const LabelFn& label) {
  constexpr double kRidge = 1.0;
  std::map<std::string, Eigen::Index> classes;
  for (const auto& r : rows) classes.emplace(label(r), 0);
  Eigen::Index next = 0;
  for (auto& [name, id] : classes) id = next++;
  std::set<std::string> utterances;
  for (const auto& r : rows) utterances.insert(r.utterance);

  const Eigen::Index d = static_cast<Eigen::Index>(rows.front().vector.size());
  std::size_t correct = 0;
  for (const auto& held_out : utterances) {
    std::vector<const md::EncodingRow*> fit, score;
    for (const auto& r : rows) (r.utterance == held_out ? score : fit).push_back(&r);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(fit.size()), d);
    for (std::size_t i = 0; i < fit.size(); ++i) {
      for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = fit[i]->vector[static_cast<std::size_t>(k)];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::RowVectorXd sd = ((x.rowwise() - mean).array().square().colwise().mean()).sqrt();
    sd = (sd.array() > 1e-12).select(sd, 1.0);
    Eigen::MatrixXd z(x.rows(), d + 1);
    z.leftCols(d) = (x.rowwise() - mean).array().rowwise() / sd.array();
    z.col(d).setOnes();
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), next);
    for (std::size_t i = 0; i < fit.size(); ++i) y(static_cast<Eigen::Index>(i), classes.at(label(*fit[i]))) = 1.0;
    Eigen::MatrixXd gram = z.transpose() * z;
    gram.diagonal().head(d).array() += kRidge;
    const Eigen::MatrixXd w = gram.ldlt().solve(z.transpose() * y);
    for (const auto* r : score) {
      Eigen::RowVectorXd v(d + 1);
      for (Eigen::Index k = 0; k < d; ++k) v(k) = (r->vector[static_cast<std::size_t>(k)] - mean(k)) / sd(k);
      v(d) = 1.0;
      Eigen::Index best;
      (v * w).maxCoeff(&best);
      correct += best == classes.at(label(*r));
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(rows.size());
}

struct ProbeScores {
  double pros_on_prosody, pron_on_prosody, pron_on_phoneme, pros_on_phoneme;
  bool separated() const {
    return pros_on_prosody >= pron_on_prosody + kProbeMarginPoints &&
           pron_on_phoneme >= pros_on_phoneme + kProbeMarginPoints;
  }
};

ProbeScores probe_model(const md::AcousticModel& m, const ft::Corpus& corpus) {
  std::vector<const ft::Utterance*> all;
  for (const auto& u : corpus.utterances) all.push_back(&u);
  const LabelFn phoneme = [](const md::EncodingRow& r) { return r.phoneme; };
  const LabelFn prosody = [](const md::EncodingRow& r) { return r.prosody; };
  const auto pron = md::collect_encodings(m, all, md::Stream::kPronunciation, corpus.frontend);
  const auto pros = md::collect_encodings(m, all, md::Stream::kProsody, corpus.frontend);
  return {probe_accuracy(pros, prosody), probe_accuracy(pron, prosody), probe_accuracy(pron, phoneme),
          probe_accuracy(pros, phoneme)};
}

// Probes run on the encodings of the corpus each model was overfit on. The
// same probe on unseen utterances is reported for information only.
Outcome criterion6() {
  const auto& runs = overfit_runs();
  auto gc = sy::GeneratorConfig::desk_default();
  gc.utterances_per_language = 40;
  gc.split_ratio = {1, 0, 0};
  const auto unseen = sy::generate_synthetic_corpus(gc, kProbeCorpusSeed);

  std::size_t separated = 0;
  std::string detail;
  for (const auto& run : runs.runs) {
    const ProbeScores own = probe_model(*run.model, runs.corpus);
    const ProbeScores other = probe_model(*run.model, unseen);
    separated += own.separated();
    detail += fmt(" seed%llu[prosody %.1f vs %.1f, phoneme %.1f vs %.1f; unseen: %.1f vs %.1f, %.1f vs %.1f]",
                  static_cast<unsigned long long>(run.seed), own.pros_on_prosody, own.pron_on_prosody,
                  own.pron_on_phoneme, own.pros_on_phoneme, other.pros_on_prosody, other.pron_on_prosody,
                  other.pron_on_phoneme, other.pros_on_phoneme);
  }
  return {separated == runs.runs.size(),
          fmt("%zu/%zu models separate both ways by >=10 points (accuracy %%, matching vs other encoder):", separated,
              runs.runs.size()) +
              detail};
}

Outcome criterion7() {
  auto gc = sy::GeneratorConfig::desk_default();
  gc.utterances_per_language = 20;
  const auto corpus = sy::generate_synthetic_corpus(gc, kAblationCorpusSeed);
  std::size_t wins = 0;
  std::string detail;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed : kSeeds) {
    double rmse[2] = {0.0, 0.0};
    for (int single = 0; single < 2; ++single) {
      md::AcousticModel m(desk_model(corpus, single == 1), seed);
      tr::TrainConfig tc;
      tc.batch_size = kOverfitBatch;
      tc.seed = seed;
      tr::Trainer trainer(m, corpus, tc);
      trainer.run(kAblationSteps);
      const auto report = mt::evaluate(m, corpus, ft::Split::kDev, mt::EvalMode::kTeacherForced);
      rmse[single] = report.overall.f0_rmse_hz.value_or(std::numeric_limits<double>::infinity());
    }
    wins += rmse[0] <= rmse[1];
    detail += fmt(" seed%llu[%.2f vs %.2f]", static_cast<unsigned long long>(seed), rmse[0], rmse[1]);
  }
  return {wins >= kRequiredSeeds,
          fmt("two-stream dev F0-RMSE <= single-stream on %zu/5 seeds after %zu steps (Hz, two vs single):", wins,
              kAblationSteps) +
              detail + fmt(" (%.0fs)", seconds_since(t0))};
}

Outcome criterion8() {
  ft::FeatureTrack a(1), b(1);
  b.at(0, 0) = 1.0;
  const double mcd = mt::mcd(a, b);
  const double expected = 10.0 / std::numbers::ln10 * std::sqrt(2.0);

  ft::FeatureTrack v(4), w(4);
  for (std::size_t t = 0; t < 4; ++t) v.at(t, ft::kVuvIndex) = w.at(t, ft::kVuvIndex) = 1.0;
  w.at(2, ft::kVuvIndex) = 0.0;
  const double vuv = mt::vuv_err(v, w);

  const double hz[] = {110.0, 135.0, 160.0, 150.0, 125.0, 140.0};
  ft::FeatureTrack ref(6), shifted(6);
  for (std::size_t t = 0; t < 6; ++t) {
    ref.at(t, ft::kVuvIndex) = shifted.at(t, ft::kVuvIndex) = 1.0;
    ref.at(t, ft::kLogF0Index) = std::log(hz[t]);
    shifted.at(t, ft::kLogF0Index) = std::log(hz[t] + 20.0);
  }
  const double corr = *mt::f0_metrics(ref, shifted).corr;
  return {std::abs(mcd - expected) < kMcdTolerance && vuv == 25.0 && std::abs(corr - 1.0) < kCorrTolerance,
          fmt("MCD %.12f (expected %.12f), V/UV-ERR %.1f, F0-CORR 1-%.2e", mcd, expected, vuv, 1.0 - corr)};
}

Outcome criterion9() {
  const tr::TrainConfig cfg;
  const fs::path dir = fs::temp_directory_path() / "dsam_acceptance_schedule";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "schedule.csv");
    tr::write_log_header(out);
    for (std::size_t s = 0; s < kScheduleSteps; ++s) tr::write_log_row(out, {s, tr::learning_rate(s, cfg), {}});
  }
  const auto logged = tr::read_log_csv(dir / "schedule.csv");
  std::size_t bad = logged.size() == kScheduleSteps ? 0 : 1;
  std::size_t bad_group = 0;
  for (std::size_t s = 0; s < logged.size(); ++s) {
    const double expected = 1e-3 * std::pow(0.5, std::floor(static_cast<double>(s) / 15000.0));
    bad += logged[s].step != s || logged[s].lr != expected;
    for (const auto& g : cfg.prosody_groups) bad_group += tr::group_learning_rate(s, g, cfg) != 0.5 * expected;
    bad_group += tr::group_learning_rate(s, "pron_enc", cfg) != expected;
  }
  return {bad == 0 && bad_group == 0,
          fmt("%zu steps: %zu lr mismatches, %zu prosody/other group mismatches; lr(44999)=%g lr(45000)=%g",
              logged.size(), bad, bad_group, logged[44999].lr, logged[45000].lr)};
}

Outcome criterion10() {
  const auto corpus = sy::generate_synthetic_corpus(sy::GeneratorConfig::five_languages(), 10);
  const auto batches = tr::make_batches(corpus.select(ft::Split::kTrain), 5, 50, 10, kBalanceBatches);
  std::size_t bad = 0;
  for (const auto& b : batches) {
    std::map<std::size_t, std::size_t> count;
    for (const auto* u : b) ++count[u->sequence.language];
    bool ok = b.size() == 50 && count.size() == 5;
    for (const auto& [lang, n] : count) ok = ok && n == 10;
    bad += !ok;
  }
  return {bad == 0, fmt("%zu batches of 50 over 5 languages, %zu unbalanced", batches.size(), bad)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome criterion11() {
  const fs::path root = fs::temp_directory_path() / "dsam_acceptance_determinism";
  fs::remove_all(root);
  const auto gc = sy::GeneratorConfig::desk_default();
  ft::save_corpus(sy::generate_synthetic_corpus(gc, 2024), root / "a");
  ft::save_corpus(sy::generate_synthetic_corpus(gc, 2024), root / "b");
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    differ += slurp(e.path()) != slurp(root / "b" / fs::relative(e.path(), root / "a"));
  }

  auto train_log = [] {
    const auto corpus = overfit_corpus();
    md::AcousticModel m(desk_model(corpus), 11);
    tr::TrainConfig tc;
    tc.batch_size = kOverfitBatch;
    tc.seed = 11;
    tr::Trainer trainer(m, corpus, tc);
    std::ostringstream csv;
    tr::write_log_header(csv);
    for (const auto& row : trainer.run(25)) tr::write_log_row(csv, row);
    return csv.str();
  };
  const std::string first = train_log();
  const bool logs_equal = first == train_log();
  return {files > 0 && differ == 0 && logs_equal,
          fmt("%zu corpus files, %zu differ; 25-step loss logs %s", files, differ, logs_equal ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--criteria", only, "Run only these criteria (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3,  criterion4,
                                                          criterion5, criterion6, criterion7,  criterion8,
                                                          criterion9, criterion10, criterion11};
  std::set<int> selected(only.begin(), only.end());
  bool all_pass = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::printf("criterion %d: %s - %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
