#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsam/autodiff/graph.hpp"
#include "dsam/features.hpp"
#include "dsam/model/model.hpp"
#include "dsam/training/loss.hpp"
#include "json.hpp"

namespace dsam::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lambda = 0.05;
  std::size_t batch_size = 50;
  double base_lr = 1e-3;
  std::size_t halving_interval = 15000;
  double prosody_lr_factor = 0.5;
  std::vector<std::string> prosody_groups = {"pros_enc", "pros_dec"};
  // Weight of the classifier's own loss_spk term in the minimized objective.
  double classifier_weight = 1.0;
  AdamConfig adam;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
  std::size_t max_steps = 20000;
  std::uint64_t seed = 0;  // set by the command-level seed, not serialized
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only

  void validate(std::size_t language_count) const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

// base_lr * 0.5^floor(step / halving_interval)
double learning_rate(std::size_t step, const TrainConfig& cfg);
double group_learning_rate(std::size_t step, const std::string& group, const TrainConfig& cfg);

// Language-balanced batches: each batch holds batch_size / languages
// utterances of every language. Each language walks its own shuffled
// permutation of its training utterances and starts a fresh permutation when
// exhausted, so smaller languages are oversampled.
class BatchSampler {
 public:
  BatchSampler(std::span<const features::Utterance* const> train, std::size_t language_count, std::size_t batch_size,
               std::uint64_t seed);

  std::vector<const features::Utterance*> next();
  std::size_t per_language() const { return per_language_; }

 private:
  std::vector<std::vector<const features::Utterance*>> pools_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<std::size_t> cursor_;
  std::size_t per_language_;
  std::mt19937_64 rng_;
};

std::vector<std::vector<const features::Utterance*>> make_batches(
    std::span<const features::Utterance* const> train, std::size_t language_count, std::size_t batch_size,
    std::uint64_t seed, std::size_t count);

class Adam {
 public:
  Adam(const ad::ParameterStore& params, AdamConfig cfg);
  void step(ad::ParameterStore& params, const ad::Gradients& grads, const std::function<double(ad::ParamId)>& lr);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
  std::size_t t_ = 0;
};

struct LogRow {
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LogRow& row);
std::vector<LogRow> read_log_csv(const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(model::AcousticModel& model, const features::Corpus& corpus, TrainConfig cfg);

  // One optimizer update on the next batch; returns the pre-update losses.
  LogRow step();
  std::vector<LogRow> run(std::size_t steps, const std::function<void(const LogRow&)>& on_log = {});

  // Teacher-forced loss over a set of utterances without updating.
  LossBreakdown evaluate_loss(std::span<const features::Utterance* const> utterances) const;

  std::size_t steps_done() const { return step_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  const LossTargets& targets_for(const features::Utterance* u) const;
  const features::FeatureTrack& normalized_for(const features::Utterance* u) const;

  model::AcousticModel& model_;
  const features::Corpus& corpus_;
  TrainConfig cfg_;
  BatchSampler sampler_;
  Adam adam_;
  std::size_t step_ = 0;
  std::vector<features::FeatureTrack> normalized_;
  std::vector<LossTargets> targets_;
};

}  // namespace dsam::training
