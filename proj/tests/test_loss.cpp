#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dsam/autodiff/ops.hpp"
#include "dsam/training/loss.hpp"
#include "toy_model.hpp"

namespace ad = dsam::ad;
namespace ft = dsam::features;
namespace tr = dsam::training;
using ad::Graph;
using ad::Shape;
using ad::Tensor;

namespace {

ft::FeatureTrack random_track(std::size_t frames, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ft::FeatureTrack t(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t d = 0; d < ft::kStatDim; ++d) t.at(f, d) = n(rng);
    const bool voiced = f % 3 != 1;
    t.at(f, ft::kVuvIndex) = voiced ? 1.0 : 0.0;
    if (!voiced) t.at(f, ft::kLogF0Index) = 0.0;
  }
  return t;
}

// Predictions with `frames` columns and `tokens` classifier columns; values
// past the valid region are garbage that masks must hide.
tr::Predictions random_predictions(Graph& g, std::size_t frames, std::size_t tokens, std::size_t speakers,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> p(0.05, 0.95);
  auto fill = [&](Shape shape, bool prob) {
    Tensor t(shape);
    for (auto& v : t.values()) v = prob ? p(rng) : n(rng);
    return g.constant(t);
  };
  return {fill({ft::kMcepDim, frames}, false), fill({1, frames}, false), fill({1, frames}, false),
          fill({1, frames}, true),             fill({1, frames}, true),  fill({speakers, tokens}, false)};
}

// Copies the first `frames`/`tokens` columns of a wider prediction set.
tr::Predictions prefix(const tr::Predictions& p, std::size_t frames, std::size_t tokens) {
  auto cut = [](ad::Var v, std::size_t n) { return ad::slice(v, 1, 0, n); };
  return {cut(p.mcep, frames), cut(p.energy, frames), cut(p.logf0, frames),
          cut(p.vuv, frames),  cut(p.stop, frames),   cut(p.speaker_logits, tokens)};
}

void expect_breakdowns_near(const tr::LossBreakdown& a, const tr::LossBreakdown& b, double tol) {
  EXPECT_NEAR(a.mse_mcep, b.mse_mcep, tol);
  EXPECT_NEAR(a.mse_energy, b.mse_energy, tol);
  EXPECT_NEAR(a.mse_logf0, b.mse_logf0, tol);
  EXPECT_NEAR(a.bce_vuv, b.bce_vuv, tol);
  EXPECT_NEAR(a.bce_stop, b.bce_stop, tol);
  EXPECT_NEAR(a.loss_rec, b.loss_rec, tol);
  EXPECT_NEAR(a.loss_spk, b.loss_spk, tol);
  EXPECT_NEAR(a.loss_total, b.loss_total, tol);
}

}  // namespace

TEST(Loss, PerfectFitIsNearZero) {
  std::mt19937_64 rng(1);
  const auto track = random_track(7, rng);
  const auto targets = tr::make_targets(track, 0, 3);
  Graph g;
  auto clamp_toward = [&](const Tensor& t) {
    Tensor p = t;
    for (auto& v : p.values()) v = v > 0.5 ? 1.0 - ad::kProbFloor : ad::kProbFloor;
    return g.constant(p);
  };
  const tr::Predictions pred{g.constant(targets.mcep), g.constant(targets.energy), g.constant(targets.logf0),
                             clamp_toward(targets.vuv), clamp_toward(targets.stop),
                             g.constant(Tensor::matrix(2, 3, {0, 0, 0, 0, 0, 0}))};
  const auto b = tr::compute_loss(pred, targets, 0.05);
  EXPECT_LT(b.loss_rec, 1e-5);
  EXPECT_EQ(b.mse_mcep, 0.0);
}

TEST(Loss, McepAllOnesAgainstZerosIsOne) {
  ft::FeatureTrack track(1);
  track.at(0, ft::kVuvIndex) = 1.0;
  const auto targets = tr::make_targets(track, 0, 1);
  Graph g;
  Tensor ones(Shape{ft::kMcepDim, 1}, 1.0);
  const tr::Predictions pred{g.constant(ones),
                             g.constant(targets.energy),
                             g.constant(targets.logf0),
                             g.constant(Tensor(Shape{1, 1}, 0.5)),
                             g.constant(Tensor(Shape{1, 1}, 0.5)),
                             g.constant(Tensor::matrix(2, 1, {0, 0}))};
  EXPECT_DOUBLE_EQ(tr::compute_loss(pred, targets, 0.05).mse_mcep, 1.0);
}

TEST(Loss, TotalFollowsReconstructionMinusWeightedSpeakerTerm) {
  Graph g;
  auto c = [&](double v) { return g.constant(Tensor::scalar(v)); };
  tr::LossTerms t{c(0.5), c(0.25), c(0.75), c(0.125), c(0.375), c(0.0), c(1.0), false};
  const tr::LossTerms terms[] = {t};
  const auto b = tr::breakdown(terms, 0.05);
  EXPECT_DOUBLE_EQ(b.loss_rec, 2.0);
  EXPECT_NEAR(b.loss_total, 1.95, 1e-15);
  EXPECT_EQ(b.loss_total, b.loss_rec - 0.05 * b.loss_spk);
}

TEST(Loss, ObjectiveAddsWeightedSpeakerTerm) {
  Graph g;
  auto c = [&](double v) { return g.constant(Tensor::scalar(v)); };
  tr::LossTerms t{c(0), c(0), c(0), c(0), c(0), c(2.0), c(3.0), false};
  EXPECT_DOUBLE_EQ(tr::training_objective(t, 1.0).value().item(), 5.0);
  EXPECT_DOUBLE_EQ(tr::training_objective(t, 0.5).value().item(), 3.5);
}

TEST(Loss, PaddingDoesNotChangeAnyTerm) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t frames = 5 + trial;
    const std::size_t tokens = 3 + trial % 2;
    const std::size_t pad = 4;
    const auto track = random_track(frames, rng);
    Graph g;
    const auto wide = random_predictions(g, frames + 2 * pad, tokens + 2 * pad, 3, 100 + trial);
    const auto plain = tr::compute_loss(prefix(wide, frames, tokens), tr::make_targets(track, 1, tokens), 0.05);
    const auto once = tr::compute_loss(prefix(wide, frames + pad, tokens + pad),
                                       tr::make_targets(track, 1, tokens, frames + pad, tokens + pad), 0.05);
    const auto twice = tr::compute_loss(wide, tr::make_targets(track, 1, tokens, frames + 2 * pad, tokens + 2 * pad),
                                        0.05);
    expect_breakdowns_near(plain, once, 1e-12);
    expect_breakdowns_near(once, twice, 1e-12);
  }
}

TEST(Loss, PooledNormalizersAverageOverValidElements) {
  std::mt19937_64 rng(3);
  const auto a = random_track(4, rng);
  const auto b = random_track(6, rng);
  const auto ta = tr::make_targets(a, 0, 2, 6, 3);
  const auto tb = tr::make_targets(b, 1, 3);
  const tr::LossTargets* both[] = {&ta, &tb};
  const auto norm = tr::count_elements(both);
  EXPECT_EQ(norm.frames, 10.0);
  EXPECT_EQ(norm.mcep, 400.0);
  EXPECT_EQ(norm.tokens, 5.0);
  double voiced = 0.0;
  for (std::size_t f = 0; f < 4; ++f) voiced += a.voiced(f);
  for (std::size_t f = 0; f < 6; ++f) voiced += b.voiced(f);
  EXPECT_EQ(norm.voiced, voiced);

  // Pooled energy MSE equals the squared error summed over both, divided by 10.
  Graph g;
  Tensor zero(Shape{1, 6});
  double sq = 0.0;
  for (std::size_t f = 0; f < 4; ++f) sq += a.energy(f) * a.energy(f);
  for (std::size_t f = 0; f < 6; ++f) sq += b.energy(f) * b.energy(f);
  const auto pa = random_predictions(g, 6, 3, 2, 5);
  const auto pb = random_predictions(g, 6, 3, 2, 6);
  const tr::Predictions za{pa.mcep, g.constant(zero), pa.logf0, pa.vuv, pa.stop, pa.speaker_logits};
  const tr::Predictions zb{pb.mcep, g.constant(zero), pb.logf0, pb.vuv, pb.stop, pb.speaker_logits};
  const tr::LossTerms terms[] = {tr::loss_terms(za, ta, &norm), tr::loss_terms(zb, tb, &norm)};
  EXPECT_NEAR(tr::breakdown(terms, 0.05).mse_energy, sq / 10.0, 1e-12);
}

TEST(Loss, EmptyVoicedMaskGivesZeroLogF0Term) {
  ft::FeatureTrack track(3);
  const auto targets = tr::make_targets(track, 0, 2);
  Graph g;
  const auto pred = random_predictions(g, 3, 2, 2, 9);
  const auto b = tr::compute_loss(pred, targets, 0.05);
  EXPECT_EQ(b.mse_logf0, 0.0);
  EXPECT_TRUE(b.logf0_mask_empty);
  EXPECT_TRUE(std::isfinite(b.loss_rec));
}

TEST(Loss, RejectsMismatchedShapes) {
  std::mt19937_64 rng(4);
  const auto targets = tr::make_targets(random_track(4, rng), 0, 2);
  Graph g;
  EXPECT_THROW(tr::compute_loss(random_predictions(g, 5, 2, 2, 1), targets, 0.05), std::invalid_argument);
  EXPECT_THROW(tr::compute_loss(random_predictions(g, 4, 3, 2, 1), targets, 0.05), std::invalid_argument);
  EXPECT_THROW(tr::make_targets(ft::FeatureTrack(), 0, 2), std::invalid_argument);
}

TEST(Loss, EncoderStepAgainstFrozenClassifierRaisesSpeakerLoss) {
  const auto corpus = dsam::testing::toy_corpus();
  const auto problem = dsam::testing::toy_problem(corpus);
  const double lambda = 0.05;
  const double lr = 1e-2;
  double mean_change = 0.0;
  int raised = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    dsam::model::AcousticModel m(dsam::testing::toy_config(corpus), 200 + seed);
    dsam::testing::perturb_generators(m, 300 + seed);
    auto speaker_loss = [&](ad::Gradients* grads) {
      Graph g(&m.params());
      std::vector<const tr::LossTargets*> ptrs;
      for (const auto& t : problem.targets) ptrs.push_back(&t);
      const auto norm = tr::count_elements(ptrs);
      ad::Var total;
      for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        const auto& u = corpus.utterances[i];
        const auto enc = m.encode_all(g, u.sequence);
        const auto logits = m.speaker_logits(g, enc.joint, lambda);
        const std::vector<std::size_t> labels(u.sequence.length(), u.sequence.speaker);
        ad::Var item = ad::cross_entropy_logits(logits, labels, problem.targets[i].token_mask, norm.tokens);
        total = total.valid() ? ad::add(total, item) : item;
      }
      if (grads) *grads = g.backward(total);
      return total.value().item();
    };
    ad::Gradients grads;
    const double before = speaker_loss(&grads);
    // Descend only the encoder groups; the classifier stays frozen.
    for (ad::ParamId p = 0; p < m.params().size(); ++p) {
      const auto& group = m.params().group(p);
      if (group != "pron_enc" && group != "pros_enc") continue;
      auto values = m.params().value(p).values();
      for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grads[p][i];
    }
    const double after = speaker_loss(nullptr);
    mean_change += (after - before) / seeds;
    raised += after >= before;
  }
  EXPECT_GT(mean_change, 0.0);
  EXPECT_EQ(raised, seeds);
}
