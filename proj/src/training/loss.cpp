#include "dsam/training/loss.hpp"

#include <stdexcept>

#include "dsam/autodiff/ops.hpp"

namespace dsam::training {

using ad::Shape;
using ad::Tensor;

LossTargets make_targets(const features::FeatureTrack& normalized, std::size_t speaker, std::size_t tokens,
                         std::size_t padded_frames, std::size_t padded_tokens) {
  const std::size_t valid = normalized.frame_count();
  if (valid == 0) throw std::invalid_argument("targets need at least one frame");
  if (tokens == 0) throw std::invalid_argument("targets need at least one token");
  const std::size_t frames = std::max(valid, padded_frames);
  const std::size_t token_count = std::max(tokens, padded_tokens);
  LossTargets t;
  t.mcep = Tensor(Shape{features::kMcepDim, frames});
  t.energy = Tensor(Shape{1, frames});
  t.logf0 = Tensor(Shape{1, frames});
  t.vuv = Tensor(Shape{1, frames});
  t.stop = Tensor(Shape{1, frames});
  t.frame_mask = Tensor(Shape{1, frames});
  for (std::size_t f = 0; f < valid; ++f) {
    for (std::size_t d = 0; d < features::kMcepDim; ++d) t.mcep[d * frames + f] = normalized.at(f, d);
    t.energy[f] = normalized.energy(f);
    t.logf0[f] = normalized.voiced(f) ? normalized.logf0(f) : 0.0;
    t.vuv[f] = normalized.voiced(f) ? 1.0 : 0.0;
    t.frame_mask[f] = 1.0;
  }
  t.stop[valid - 1] = 1.0;
  t.token_mask.assign(token_count, 0.0);
  for (std::size_t i = 0; i < tokens; ++i) t.token_mask[i] = 1.0;
  t.speaker = speaker;
  return t;
}

Normalizers count_elements(std::span<const LossTargets* const> targets) {
  Normalizers n;
  for (const LossTargets* t : targets) {
    for (std::size_t f = 0; f < t->frames(); ++f) {
      n.frames += t->frame_mask[f];
      n.voiced += t->frame_mask[f] * t->vuv[f];
    }
    for (double m : t->token_mask) n.tokens += m;
  }
  n.mcep = n.frames * static_cast<double>(features::kMcepDim);
  return n;
}

LossTerms loss_terms(const Predictions& pred, const LossTargets& targets, const Normalizers* norm) {
  const std::size_t frames = targets.frames();
  if (pred.mcep.value().cols() != frames || pred.energy.value().size() != frames ||
      pred.logf0.value().size() != frames || pred.vuv.value().size() != frames || pred.stop.value().size() != frames) {
    throw std::invalid_argument("loss: prediction frame counts do not match targets (" + std::to_string(frames) + ")");
  }
  Tensor mcep_mask(Shape{features::kMcepDim, frames});
  for (std::size_t d = 0; d < features::kMcepDim; ++d) {
    for (std::size_t f = 0; f < frames; ++f) mcep_mask[d * frames + f] = targets.frame_mask[f];
  }
  Tensor voiced_mask(Shape{1, frames});
  double voiced = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    voiced_mask[f] = targets.frame_mask[f] * targets.vuv[f];
    voiced += voiced_mask[f];
  }

  Normalizers own;
  if (!norm) {
    const LossTargets* one[] = {&targets};
    own = count_elements(one);
    norm = &own;
  }
  LossTerms t;
  t.mse_mcep = ad::mse(pred.mcep, targets.mcep, mcep_mask, norm->mcep);
  t.mse_energy = ad::mse(pred.energy, targets.energy, targets.frame_mask, norm->frames);
  t.logf0_mask_empty = norm->voiced == 0.0;
  // A zero normalizer makes the term identically 0.
  t.mse_logf0 = ad::mse(pred.logf0, targets.logf0, voiced_mask, voiced > 0.0 ? norm->voiced : 0.0);
  t.bce_vuv = ad::bce(pred.vuv, targets.vuv, targets.frame_mask, norm->frames);
  t.bce_stop = ad::bce(pred.stop, targets.stop, targets.frame_mask, norm->frames);
  t.loss_rec = ad::add(ad::add(ad::add(ad::add(t.mse_mcep, t.mse_energy), t.mse_logf0), t.bce_vuv), t.bce_stop);

  const std::size_t tokens = pred.speaker_logits.value().cols();
  if (targets.token_mask.size() != tokens) throw std::invalid_argument("loss: token mask length mismatch");
  std::vector<std::size_t> labels(tokens, targets.speaker);
  t.loss_spk = ad::cross_entropy_logits(pred.speaker_logits, labels, targets.token_mask, norm->tokens);
  return t;
}

Var training_objective(const LossTerms& terms, double classifier_weight) {
  return ad::add(terms.loss_rec, ad::scale(terms.loss_spk, classifier_weight));
}

LossBreakdown breakdown(std::span<const LossTerms> terms, double lambda) {
  LossBreakdown b;
  b.logf0_mask_empty = !terms.empty();
  for (const auto& t : terms) {
    b.mse_mcep += t.mse_mcep.value().item();
    b.mse_energy += t.mse_energy.value().item();
    b.mse_logf0 += t.mse_logf0.value().item();
    b.bce_vuv += t.bce_vuv.value().item();
    b.bce_stop += t.bce_stop.value().item();
    b.loss_spk += t.loss_spk.value().item();
    b.logf0_mask_empty = b.logf0_mask_empty && t.logf0_mask_empty;
  }
  b.loss_rec = b.mse_mcep + b.mse_energy + b.mse_logf0 + b.bce_vuv + b.bce_stop;
  b.loss_total = b.loss_rec - lambda * b.loss_spk;
  return b;
}

LossBreakdown compute_loss(const Predictions& pred, const LossTargets& targets, double lambda) {
  const LossTerms t[] = {loss_terms(pred, targets)};
  return breakdown(t, lambda);
}

}  // namespace dsam::training
