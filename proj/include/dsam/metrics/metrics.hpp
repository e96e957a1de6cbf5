#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dsam/features.hpp"
#include "dsam/model/model.hpp"

namespace dsam::metrics {

using features::FeatureTrack;

// Mean over frames of (10/ln10) * sqrt(2 * sum_d (c_d - c'_d)^2) over all 40
// mel-cepstral coefficients. Tracks must have equal frame counts.
double mcd(const FeatureTrack& ref, const FeatureTrack& pred);

struct F0Metrics {
  std::optional<double> rmse_hz;  // undefined without co-voiced frames
  std::optional<double> corr;     // undefined below 2 co-voiced frames or for a flat contour
  std::size_t co_voiced = 0;
};

// F0 in Hz (exp of logF0) over frames voiced in both tracks.
F0Metrics f0_metrics(const FeatureTrack& ref, const FeatureTrack& pred);

// Energy RMSE over all frames, in the tracks' energy units.
double en_rmse(const FeatureTrack& ref, const FeatureTrack& pred);

// 100 * (frames whose voicing disagrees) / T.
double vuv_err(const FeatureTrack& ref, const FeatureTrack& pred);

struct DtwResult {
  double cost = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> path;  // (ref frame, pred frame)
};

// Symmetric DTW on mel-cepstra: Euclidean local cost, steps (1,0), (0,1),
// (1,1) with unit weight. Ties prefer the diagonal step.
DtwResult dtw(const FeatureTrack& ref, const FeatureTrack& pred);

// Paired tracks of equal length following a warping path.
std::pair<FeatureTrack, FeatureTrack> align_tracks(const FeatureTrack& ref, const FeatureTrack& pred,
                                                   const DtwResult& alignment);

enum class EvalMode { kTeacherForced, kFreeRunning };
std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& tag);

struct UtteranceMetrics {
  std::string id;
  std::size_t language = 0;
  double mcd_db = 0.0;
  F0Metrics f0;
  double en_rmse = 0.0;
  double vuv_err_percent = 0.0;
  std::size_t frames = 0;
  bool truncated = false;  // free-running synthesis hit the frame limit
};

UtteranceMetrics compare_tracks(const FeatureTrack& ref, const FeatureTrack& pred);

struct MetricRow {
  std::string name;
  double mcd_db = 0.0;
  std::optional<double> f0_rmse_hz;
  std::optional<double> f0_corr;
  double en_rmse = 0.0;
  double vuv_err_percent = 0.0;
  std::size_t utterances = 0;
};

struct EvalReport {
  EvalMode mode = EvalMode::kTeacherForced;
  std::vector<MetricRow> languages;
  MetricRow overall;
  std::vector<UtteranceMetrics> utterances;
};

// Per-language and overall rows as unweighted means of per-utterance values.
// F0 columns average only the utterances where they are defined.
EvalReport aggregate(const std::vector<UtteranceMetrics>& utterances, const std::vector<std::string>& language_names,
                     EvalMode mode);

// Denormalized prediction of a teacher-forced pass; voicing is vuv > 0.5.
FeatureTrack teacher_forced_prediction(const model::AcousticModel& model, const features::Utterance& utterance,
                                       const features::NormStats& stats);

// Evaluates a split. Free-running synthesis stops at 2*T + 20 frames.
EvalReport evaluate(const model::AcousticModel& model, const features::Corpus& corpus, features::Split split,
                    EvalMode mode);

void write_report_csv(std::ostream& out, const EvalReport& report);
void write_utterance_csv(std::ostream& out, const EvalReport& report);
std::string format_table(const EvalReport& report);

}  // namespace dsam::metrics
