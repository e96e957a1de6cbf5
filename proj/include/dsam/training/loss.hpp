#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsam/autodiff/graph.hpp"
#include "dsam/features.hpp"

namespace dsam::training {

using ad::Var;

struct LossBreakdown {
  double mse_mcep = 0.0;
  double mse_energy = 0.0;
  double mse_logf0 = 0.0;  // voiced target frames only
  double bce_vuv = 0.0;
  double bce_stop = 0.0;
  double loss_rec = 0.0;
  double loss_spk = 0.0;
  double loss_total = 0.0;  // loss_rec - lambda * loss_spk
  bool logf0_mask_empty = false;
};

// Normalized targets of one utterance, optionally padded to a longer length.
// Padded frames and tokens carry mask 0.
struct LossTargets {
  ad::Tensor mcep;        // [40, T]
  ad::Tensor energy;      // [1, T]
  ad::Tensor logf0;       // [1, T]
  ad::Tensor vuv;         // [1, T]
  ad::Tensor stop;        // [1, T], 1 on the last valid frame
  ad::Tensor frame_mask;  // [1, T]
  std::vector<double> token_mask;  // [L]
  std::size_t speaker = 0;

  std::size_t frames() const { return frame_mask.size(); }
};

LossTargets make_targets(const features::FeatureTrack& normalized, std::size_t speaker, std::size_t tokens,
                         std::size_t padded_frames = 0, std::size_t padded_tokens = 0);

// Element counts that turn per-utterance sums into pooled means.
struct Normalizers {
  double mcep = 0.0;
  double frames = 0.0;
  double voiced = 0.0;
  double tokens = 0.0;
};
Normalizers count_elements(std::span<const LossTargets* const> targets);

struct Predictions {
  Var mcep;
  Var energy;
  Var logf0;
  Var vuv;   // probabilities
  Var stop;  // probabilities
  Var speaker_logits;  // [S, L], already behind the gradient reversal
};

struct LossTerms {
  Var mse_mcep;
  Var mse_energy;
  Var mse_logf0;
  Var bce_vuv;
  Var bce_stop;
  Var loss_rec;
  Var loss_spk;
  bool logf0_mask_empty = false;
};

// Builds every loss term. Without normalizers each term is the mean over this
// utterance's valid elements.
LossTerms loss_terms(const Predictions& pred, const LossTargets& targets, const Normalizers* norm = nullptr);

// Objective the optimizer minimizes: loss_rec + classifier_weight * loss_spk.
// The encoder sees loss_spk through the reversal, which realizes the
// -lambda * loss_spk term for encoder parameters.
Var training_objective(const LossTerms& terms, double classifier_weight);

LossBreakdown breakdown(std::span<const LossTerms> terms, double lambda);

// Single-utterance convenience.
LossBreakdown compute_loss(const Predictions& pred, const LossTargets& targets, double lambda);

}  // namespace dsam::training
