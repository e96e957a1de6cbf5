#include "dsam/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dsam/autodiff/ops.hpp"
#include "dsam/errors.hpp"

namespace dsam::training {

void TrainConfig::validate(std::size_t language_count) const {
  if (!(lambda >= 0.0)) throw ConfigError("train: lambda must be nonnegative");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (language_count == 0 || batch_size % language_count != 0) {
    throw ConfigError("train: batch size " + std::to_string(batch_size) + " is not divisible by the language count " +
                      std::to_string(language_count));
  }
  if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be positive");
  if (halving_interval == 0) throw ConfigError("train: halving_interval must be positive");
  if (!(prosody_lr_factor > 0.0)) throw ConfigError("train: prosody_lr_factor must be positive");
  if (!(classifier_weight >= 0.0)) throw ConfigError("train: classifier_weight must be nonnegative");
  if (!(clip_norm >= 0.0)) throw ConfigError("train: clip_norm must be nonnegative");
  if (log_every == 0) throw ConfigError("train: log_every must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = {{"lambda", cfg.lambda},
       {"batch_size", cfg.batch_size},
       {"base_lr", cfg.base_lr},
       {"halving_interval", cfg.halving_interval},
       {"prosody_lr_factor", cfg.prosody_lr_factor},
       {"prosody_groups", cfg.prosody_groups},
       {"classifier_weight", cfg.classifier_weight},
       {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
       {"clip_norm", cfg.clip_norm},
       {"max_steps", cfg.max_steps},
       {"log_every", cfg.log_every},
       {"checkpoint_every", cfg.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  static const std::set<std::string> known = {"lambda",          "batch_size",       "base_lr",   "halving_interval",
                                              "prosody_lr_factor", "prosody_groups", "classifier_weight",
                                              "adam",            "clip_norm",        "max_steps",
                                              "log_every",       "checkpoint_every"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("train: unknown key \"" + it.key() + "\"");
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("lambda", cfg.lambda);
  opt("batch_size", cfg.batch_size);
  opt("base_lr", cfg.base_lr);
  opt("halving_interval", cfg.halving_interval);
  opt("prosody_lr_factor", cfg.prosody_lr_factor);
  opt("prosody_groups", cfg.prosody_groups);
  opt("classifier_weight", cfg.classifier_weight);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (it.key() != "beta1" && it.key() != "beta2" && it.key() != "eps") {
        throw ConfigError("train.adam: unknown key \"" + it.key() + "\"");
      }
    }
    cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
    cfg.adam.eps = a.value("eps", cfg.adam.eps);
  }
  opt("clip_norm", cfg.clip_norm);
  opt("max_steps", cfg.max_steps);
  opt("log_every", cfg.log_every);
  opt("checkpoint_every", cfg.checkpoint_every);
}

double learning_rate(std::size_t step, const TrainConfig& cfg) {
  return cfg.base_lr * std::ldexp(1.0, -static_cast<int>(step / cfg.halving_interval));
}

double group_learning_rate(std::size_t step, const std::string& group, const TrainConfig& cfg) {
  const double lr = learning_rate(step, cfg);
  const bool prosody = std::find(cfg.prosody_groups.begin(), cfg.prosody_groups.end(), group) != cfg.prosody_groups.end();
  return prosody ? lr * cfg.prosody_lr_factor : lr;
}

BatchSampler::BatchSampler(std::span<const features::Utterance* const> train, std::size_t language_count,
                           std::size_t batch_size, std::uint64_t seed)
    : pools_(language_count), order_(language_count), cursor_(language_count, 0), rng_(seed) {
  if (language_count == 0 || batch_size == 0 || batch_size % language_count != 0) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size) + " is not divisible by the language count " +
                                std::to_string(language_count));
  }
  per_language_ = batch_size / language_count;
  for (const features::Utterance* u : train) {
    if (u->sequence.language >= language_count) throw std::invalid_argument("utterance language out of range");
    pools_[u->sequence.language].push_back(u);
  }
  for (std::size_t l = 0; l < language_count; ++l) {
    if (pools_[l].empty()) throw std::invalid_argument("language " + std::to_string(l) + " has no training utterances");
    order_[l].resize(pools_[l].size());
    std::iota(order_[l].begin(), order_[l].end(), std::size_t{0});
    std::shuffle(order_[l].begin(), order_[l].end(), rng_);
  }
}

std::vector<const features::Utterance*> BatchSampler::next() {
  std::vector<const features::Utterance*> batch;
  batch.reserve(per_language_ * pools_.size());
  for (std::size_t l = 0; l < pools_.size(); ++l) {
    for (std::size_t k = 0; k < per_language_; ++k) {
      if (cursor_[l] == order_[l].size()) {
        std::shuffle(order_[l].begin(), order_[l].end(), rng_);
        cursor_[l] = 0;
      }
      batch.push_back(pools_[l][order_[l][cursor_[l]++]]);
    }
  }
  return batch;
}

std::vector<std::vector<const features::Utterance*>> make_batches(
    std::span<const features::Utterance* const> train, std::size_t language_count, std::size_t batch_size,
    std::uint64_t seed, std::size_t count) {
  BatchSampler sampler(train, language_count, batch_size, seed);
  std::vector<std::vector<const features::Utterance*>> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sampler.next());
  return out;
}

Adam::Adam(const ad::ParameterStore& params, AdamConfig cfg) : cfg_(cfg) {
  for (ad::ParamId p = 0; p < params.size(); ++p) {
    m_.push_back(ad::Tensor::zeros_like(params.value(p)));
    v_.push_back(ad::Tensor::zeros_like(params.value(p)));
  }
}

void Adam::step(ad::ParameterStore& params, const ad::Gradients& grads,
                const std::function<double(ad::ParamId)>& lr) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (ad::ParamId p = 0; p < params.size(); ++p) {
    const double rate = lr(p);
    auto& w = params.value(p);
    auto& m = m_[p];
    auto& v = v_[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void write_log_header(std::ostream& out) {
  out << "step,lr,mse_mcep,mse_energy,mse_logf0,bce_vuv,bce_stop,loss_rec,loss_spk,loss_total\n";
}

void write_log_row(std::ostream& out, const LogRow& row) {
  const auto& l = row.loss;
  out << row.step << ',' << std::setprecision(17) << row.lr << ',' << l.mse_mcep << ',' << l.mse_energy << ','
      << l.mse_logf0 << ',' << l.bce_vuv << ',' << l.bce_stop << ',' << l.loss_rec << ',' << l.loss_spk << ','
      << l.loss_total << '\n';
}

std::vector<LogRow> read_log_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  std::string line;
  std::getline(in, line);
  std::vector<LogRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != 10) throw FormatError(path.string(), lineno, "expected 10 columns");
    LogRow r;
    r.step = static_cast<std::size_t>(cells[0]);
    r.lr = cells[1];
    r.loss = {cells[2], cells[3], cells[4], cells[5], cells[6], cells[7], cells[8], cells[9], false};
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::vector<const features::Utterance*> training_split(const features::Corpus& corpus) {
  auto train = corpus.select(features::Split::kTrain);
  if (train.empty()) throw std::invalid_argument("corpus has no training utterances");
  return train;
}

}  // namespace

Trainer::Trainer(model::AcousticModel& model, const features::Corpus& corpus, TrainConfig cfg)
    : model_(model),
      corpus_(corpus),
      cfg_(std::move(cfg)),
      sampler_((cfg_.validate(corpus.language_count()), training_split(corpus)), corpus.language_count(),
               cfg_.batch_size, cfg_.seed),
      adam_(model.params(), cfg_.adam) {
  for (const auto& u : corpus_.utterances) {
    normalized_.push_back(features::normalize(u.track, corpus_.stats));
    targets_.push_back(make_targets(normalized_.back(), u.sequence.speaker, u.sequence.length()));
  }
}

const features::FeatureTrack& Trainer::normalized_for(const features::Utterance* u) const {
  return normalized_.at(static_cast<std::size_t>(u - corpus_.utterances.data()));
}

const LossTargets& Trainer::targets_for(const features::Utterance* u) const {
  return targets_.at(static_cast<std::size_t>(u - corpus_.utterances.data()));
}

LogRow Trainer::step() {
  const auto batch = sampler_.next();
  ad::Graph g(&model_.params());
  std::vector<const LossTargets*> targets;
  for (const auto* u : batch) targets.push_back(&targets_for(u));
  const Normalizers norm = count_elements(targets);

  std::vector<LossTerms> terms;
  Var objective;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto out = model_.teacher_forced(g, batch[i]->sequence, normalized_for(batch[i]), cfg_.lambda);
    const Predictions pred{out.mcep, out.energy, out.logf0, out.vuv, out.stop, out.speaker_logits};
    terms.push_back(loss_terms(pred, *targets[i], &norm));
    Var item = training_objective(terms.back(), cfg_.classifier_weight);
    objective = objective.valid() ? ad::add(objective, item) : item;
  }
  LogRow row;
  row.step = step_;
  row.lr = learning_rate(step_, cfg_);
  row.loss = breakdown(terms, cfg_.lambda);
  if (!std::isfinite(row.loss.loss_total)) {
    throw std::runtime_error("training diverged at step " + std::to_string(step_) + ": loss_total is not finite");
  }

  ad::Gradients grads = g.backward(objective);
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& gr : grads) {
      for (double v : gr.values()) sq += v * v;
    }
    const double norm2 = std::sqrt(sq);
    if (norm2 > cfg_.clip_norm) {
      const double s = cfg_.clip_norm / norm2;
      for (auto& gr : grads) {
        for (auto& v : gr.values()) v *= s;
      }
    }
  }
  const auto& params = model_.params();
  adam_.step(model_.params(), grads,
             [&](ad::ParamId p) { return group_learning_rate(step_, params.group(p), cfg_); });
  ++step_;
  return row;
}

std::vector<LogRow> Trainer::run(std::size_t steps, const std::function<void(const LogRow&)>& on_log) {
  std::vector<LogRow> log;
  for (std::size_t i = 0; i < steps; ++i) {
    LogRow row = step();
    if (row.step % cfg_.log_every == 0 || i + 1 == steps) {
      log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return log;
}

LossBreakdown Trainer::evaluate_loss(std::span<const features::Utterance* const> utterances) const {
  if (utterances.empty()) throw std::invalid_argument("no utterances to evaluate");
  ad::Graph g(&model_.params());
  std::vector<const LossTargets*> targets;
  for (const auto* u : utterances) targets.push_back(&targets_for(u));
  const Normalizers norm = count_elements(targets);
  std::vector<LossTerms> terms;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto out = model_.teacher_forced(g, utterances[i]->sequence, normalized_for(utterances[i]), cfg_.lambda);
    const Predictions pred{out.mcep, out.energy, out.logf0, out.vuv, out.stop, out.speaker_logits};
    terms.push_back(loss_terms(pred, *targets[i], &norm));
  }
  return breakdown(terms, cfg_.lambda);
}

}  // namespace dsam::training
