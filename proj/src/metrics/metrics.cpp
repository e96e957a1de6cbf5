#include "dsam/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace dsam::metrics {

namespace {

void require_equal_frames(const FeatureTrack& ref, const FeatureTrack& pred, const char* what) {
  if (ref.frame_count() != pred.frame_count()) {
    throw std::invalid_argument(std::string(what) + ": frame count mismatch (" + std::to_string(ref.frame_count()) +
                                " vs " + std::to_string(pred.frame_count()) + ")");
  }
  if (ref.frame_count() == 0) throw std::invalid_argument(std::string(what) + ": empty tracks");
}

double mcep_distance(const FeatureTrack& a, std::size_t i, const FeatureTrack& b, std::size_t j) {
  double sq = 0.0;
  for (std::size_t d = 0; d < features::kMcepDim; ++d) {
    const double diff = a.at(i, d) - b.at(j, d);
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

std::string format_optional(const std::optional<double>& v, int precision) {
  if (!v) return "undefined";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

}  // namespace

double mcd(const FeatureTrack& ref, const FeatureTrack& pred) {
  require_equal_frames(ref, pred, "mcd");
  const double k = 10.0 / std::numbers::ln10;
  double total = 0.0;
  for (std::size_t t = 0; t < ref.frame_count(); ++t) {
    double sq = 0.0;
    for (std::size_t d = 0; d < features::kMcepDim; ++d) {
      const double diff = ref.at(t, d) - pred.at(t, d);
      sq += diff * diff;
    }
    total += k * std::sqrt(2.0 * sq);
  }
  return total / static_cast<double>(ref.frame_count());
}

F0Metrics f0_metrics(const FeatureTrack& ref, const FeatureTrack& pred) {
  require_equal_frames(ref, pred, "f0_metrics");
  std::vector<double> r, p;
  for (std::size_t t = 0; t < ref.frame_count(); ++t) {
    if (ref.voiced(t) && pred.voiced(t)) {
      r.push_back(std::exp(ref.logf0(t)));
      p.push_back(std::exp(pred.logf0(t)));
    }
  }
  F0Metrics m;
  m.co_voiced = r.size();
  if (r.empty()) return m;
  const double n = static_cast<double>(r.size());
  double sq = 0.0, mr = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    sq += (r[i] - p[i]) * (r[i] - p[i]);
    mr += r[i];
    mp += p[i];
  }
  m.rmse_hz = std::sqrt(sq / n);
  if (r.size() < 2) return m;
  mr /= n;
  mp /= n;
  double cov = 0.0, vr = 0.0, vp = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    cov += (r[i] - mr) * (p[i] - mp);
    vr += (r[i] - mr) * (r[i] - mr);
    vp += (p[i] - mp) * (p[i] - mp);
  }
  if (vr > 0.0 && vp > 0.0) m.corr = std::clamp(cov / std::sqrt(vr * vp), -1.0, 1.0);
  return m;
}

double en_rmse(const FeatureTrack& ref, const FeatureTrack& pred) {
  require_equal_frames(ref, pred, "en_rmse");
  double sq = 0.0;
  for (std::size_t t = 0; t < ref.frame_count(); ++t) {
    const double d = ref.energy(t) - pred.energy(t);
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(ref.frame_count()));
}

double vuv_err(const FeatureTrack& ref, const FeatureTrack& pred) {
  require_equal_frames(ref, pred, "vuv_err");
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < ref.frame_count(); ++t) wrong += ref.voiced(t) != pred.voiced(t) ? 1 : 0;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(ref.frame_count());
}

DtwResult dtw(const FeatureTrack& ref, const FeatureTrack& pred) {
  const std::size_t n = ref.frame_count();
  const std::size_t m = pred.frame_count();
  if (n == 0 || m == 0) throw std::invalid_argument("dtw: empty track");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(n * m, inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double local = mcep_distance(ref, i, pred, j);
      if (i == 0 && j == 0) {
        at(i, j) = local;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = at(i - 1, j - 1);
      if (i > 0) best = std::min(best, at(i - 1, j));
      if (j > 0) best = std::min(best, at(i, j - 1));
      at(i, j) = local + best;
    }
  }
  DtwResult r;
  r.cost = at(n - 1, m - 1);
  std::size_t i = n - 1, j = m - 1;
  r.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = at(i - 1, j - 1);
      const double up = at(i - 1, j);
      const double left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    r.path.emplace_back(i, j);
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

std::pair<FeatureTrack, FeatureTrack> align_tracks(const FeatureTrack& ref, const FeatureTrack& pred,
                                                   const DtwResult& alignment) {
  FeatureTrack a(alignment.path.size()), b(alignment.path.size());
  for (std::size_t k = 0; k < alignment.path.size(); ++k) {
    const auto [i, j] = alignment.path[k];
    if (i >= ref.frame_count() || j >= pred.frame_count()) throw std::invalid_argument("align_tracks: path out of range");
    std::copy(ref.frame(i).begin(), ref.frame(i).end(), a.frame(k).begin());
    std::copy(pred.frame(j).begin(), pred.frame(j).end(), b.frame(k).begin());
  }
  return {std::move(a), std::move(b)};
}

std::string to_string(EvalMode mode) {
  return mode == EvalMode::kTeacherForced ? "teacher-forced" : "free-running";
}

EvalMode parse_eval_mode(const std::string& tag) {
  if (tag == "teacher-forced" || tag == "tf") return EvalMode::kTeacherForced;
  if (tag == "free-running" || tag == "fr") return EvalMode::kFreeRunning;
  throw std::invalid_argument("unknown evaluation mode \"" + tag + "\" (expected teacher-forced or free-running)");
}

UtteranceMetrics compare_tracks(const FeatureTrack& ref, const FeatureTrack& pred) {
  UtteranceMetrics m;
  m.mcd_db = mcd(ref, pred);
  m.f0 = f0_metrics(ref, pred);
  m.en_rmse = en_rmse(ref, pred);
  m.vuv_err_percent = vuv_err(ref, pred);
  m.frames = ref.frame_count();
  return m;
}

namespace {

MetricRow mean_row(const std::string& name, const std::vector<const UtteranceMetrics*>& rows) {
  MetricRow out;
  out.name = name;
  out.utterances = rows.size();
  if (rows.empty()) return out;
  double rmse = 0.0, corr = 0.0;
  std::size_t n_rmse = 0, n_corr = 0;
  for (const auto* r : rows) {
    out.mcd_db += r->mcd_db;
    out.en_rmse += r->en_rmse;
    out.vuv_err_percent += r->vuv_err_percent;
    if (r->f0.rmse_hz) {
      rmse += *r->f0.rmse_hz;
      ++n_rmse;
    }
    if (r->f0.corr) {
      corr += *r->f0.corr;
      ++n_corr;
    }
  }
  const double n = static_cast<double>(rows.size());
  out.mcd_db /= n;
  out.en_rmse /= n;
  out.vuv_err_percent /= n;
  if (n_rmse) out.f0_rmse_hz = rmse / static_cast<double>(n_rmse);
  if (n_corr) out.f0_corr = corr / static_cast<double>(n_corr);
  return out;
}

}  // namespace

EvalReport aggregate(const std::vector<UtteranceMetrics>& utterances, const std::vector<std::string>& language_names,
                     EvalMode mode) {
  if (utterances.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalReport report;
  report.mode = mode;
  report.utterances = utterances;
  std::vector<const UtteranceMetrics*> all;
  for (std::size_t l = 0; l < language_names.size(); ++l) {
    std::vector<const UtteranceMetrics*> rows;
    for (const auto& u : report.utterances) {
      if (u.language == l) rows.push_back(&u);
    }
    report.languages.push_back(mean_row(language_names[l], rows));
  }
  for (const auto& u : report.utterances) {
    if (u.language >= language_names.size()) throw std::invalid_argument("evaluate: language index out of range");
    all.push_back(&u);
  }
  report.overall = mean_row("overall", all);
  return report;
}

FeatureTrack teacher_forced_prediction(const model::AcousticModel& model, const features::Utterance& utterance,
                                       const features::NormStats& stats) {
  const FeatureTrack normalized = features::normalize(utterance.track, stats);
  ad::Graph g(&model.params());
  const auto out = model.teacher_forced(g, utterance.sequence, normalized, 0.0);
  const std::size_t frames = normalized.frame_count();
  const auto& mcep = out.mcep.value();
  FeatureTrack pred(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t d = 0; d < features::kMcepDim; ++d) pred.at(t, d) = mcep[d * frames + t];
    pred.at(t, features::kEnergyIndex) = out.energy.value()[t];
    const bool voiced = out.vuv.value()[t] > 0.5;
    pred.at(t, features::kVuvIndex) = voiced ? 1.0 : 0.0;
    pred.at(t, features::kLogF0Index) = voiced ? out.logf0.value()[t] : 0.0;
  }
  return features::denormalize(pred, stats);
}

EvalReport evaluate(const model::AcousticModel& model, const features::Corpus& corpus, features::Split split,
                    EvalMode mode) {
  const auto selected = corpus.select(split);
  if (selected.empty()) throw std::invalid_argument("evaluate: split " + features::to_string(split) + " is empty");
  std::vector<UtteranceMetrics> rows;
  for (const auto* u : selected) {
    UtteranceMetrics m;
    if (mode == EvalMode::kTeacherForced) {
      m = compare_tracks(u->track, teacher_forced_prediction(model, *u, corpus.stats));
    } else {
      const auto synth = model.synthesize(u->sequence, 2 * u->track.frame_count() + 20, &corpus.stats);
      const auto path = dtw(u->track, synth.track);
      const auto [ref, pred] = align_tracks(u->track, synth.track, path);
      m = compare_tracks(ref, pred);
      m.truncated = synth.truncated;
    }
    m.id = u->transcription.id;
    m.language = u->sequence.language;
    rows.push_back(std::move(m));
  }
  std::vector<std::string> names;
  for (const auto& l : corpus.frontend.languages) names.push_back(l.name);
  return aggregate(rows, names, mode);
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
  out << "mode,language,utterances,mcd_db,f0_rmse_hz,f0_corr,en_rmse,vuv_err_percent\n";
  auto row = [&](const MetricRow& r) {
    out << to_string(report.mode) << ',' << r.name << ',' << r.utterances << ',' << std::setprecision(10) << r.mcd_db
        << ',' << format_optional(r.f0_rmse_hz, 10) << ',' << format_optional(r.f0_corr, 10) << ',' << r.en_rmse
        << ',' << r.vuv_err_percent << '\n';
  };
  for (const auto& r : report.languages) row(r);
  row(report.overall);
}

void write_utterance_csv(std::ostream& out, const EvalReport& report) {
  out << "id,language,frames,truncated,mcd_db,f0_rmse_hz,f0_corr,co_voiced,en_rmse,vuv_err_percent\n";
  for (const auto& u : report.utterances) {
    const std::string lang =
        u.language < report.languages.size() ? report.languages[u.language].name : std::to_string(u.language);
    out << u.id << ',' << lang << ',' << u.frames << ',' << (u.truncated ? 1 : 0) << ',' << std::setprecision(10)
        << u.mcd_db << ',' << format_optional(u.f0.rmse_hz, 10) << ',' << format_optional(u.f0.corr, 10) << ','
        << u.f0.co_voiced << ',' << u.en_rmse << ',' << u.vuv_err_percent << '\n';
  }
}

std::string format_table(const EvalReport& report) {
  std::ostringstream os;
  os << "Objective evaluation (" << to_string(report.mode) << ")\n";
  os << std::left << std::setw(10) << "Language" << std::right << std::setw(6) << "Utts" << std::setw(11) << "MCD(dB)"
     << std::setw(14) << "F0-RMSE(Hz)" << std::setw(10) << "F0-CORR" << std::setw(10) << "EN-RMSE" << std::setw(12)
     << "V/UV-ERR(%)" << '\n';
  auto row = [&](const MetricRow& r) {
    std::ostringstream mcd_s, en_s, vuv_s;
    mcd_s << std::fixed << std::setprecision(3) << r.mcd_db;
    en_s << std::fixed << std::setprecision(3) << r.en_rmse;
    vuv_s << std::fixed << std::setprecision(2) << r.vuv_err_percent;
    os << std::left << std::setw(10) << r.name << std::right << std::setw(6) << r.utterances << std::setw(11)
       << mcd_s.str() << std::setw(14) << format_optional(r.f0_rmse_hz, 2) << std::setw(10)
       << format_optional(r.f0_corr, 3) << std::setw(10) << en_s.str() << std::setw(12) << vuv_s.str() << '\n';
  };
  for (const auto& r : report.languages) row(r);
  row(report.overall);
  return os.str();
}

}  // namespace dsam::metrics
