#include "dsam/model/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dsam::model {

using ad::Tensor;

namespace {

Var column(Graph& g, std::vector<double> v) { return g.constant(Tensor::vector(std::move(v))); }

ad::LstmState zero_state(Graph& g, std::size_t hidden) {
  return {g.constant(Tensor(ad::Shape{hidden})), g.constant(Tensor(ad::Shape{hidden}))};
}

Var head(Graph& g, const std::string& prefix, Var x) {
  return ad::linear(g.param(prefix + "/W"), x, g.param(prefix + "/b"));
}

Var lookup_row(Graph& g, const std::string& table, std::size_t row) {
  const std::size_t ids[] = {row};
  Var v = ad::embedding(g.param(table), ids);
  return ad::reshape(v, ad::Shape{v.value().rows()});
}

}  // namespace

EncoderOutput concat_encoders(Var pron, Var pros) {
  if (pron.value().cols() != pros.value().cols()) {
    throw std::invalid_argument("concat_encoders: length mismatch " + std::to_string(pron.value().cols()) + " vs " +
                                std::to_string(pros.value().cols()));
  }
  const Var parts[] = {pron, pros};
  return {pron, pros, ad::concat(parts, 0)};
}

std::pair<Var, Var> split_context(Var context, const ModelConfig& cfg) {
  const std::size_t n = context.value().size();
  if (n != cfg.joint_dim()) {
    throw std::invalid_argument("split_context: context has " + std::to_string(n) + " entries, expected " +
                                std::to_string(cfg.joint_dim()));
  }
  return {ad::slice(context, 0, 0, cfg.pron_dim), ad::slice(context, 0, cfg.pron_dim, cfg.pros_dim)};
}

Tensor feedback_frame(const features::FeatureTrack& track, std::size_t t) {
  const auto f = track.frame(t);
  return Tensor::vector(std::vector<double>(f.begin(), f.begin() + features::kStatDim));
}

void size_for_corpus(ModelConfig& cfg, const features::Corpus& corpus) {
  cfg.vocab_size = corpus.frontend.vocab_size();
  cfg.label_width = corpus.frontend.label_width();
  cfg.language_count = corpus.language_count();
  cfg.speaker_count = corpus.speakers.size();
}

AcousticModel::AcousticModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  for (const auto& spec : parameter_layout(cfg_)) {
    Tensor t(spec.shape);
    switch (spec.init) {
      case ParamSpec::Init::kZero:
        break;
      case ParamSpec::Init::kEmbedding: {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& v : t.values()) v = dist(rng);
        break;
      }
      case ParamSpec::Init::kFanIn: {
        const double k = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        std::uniform_real_distribution<double> dist(-k, k);
        const std::size_t n = spec.weight_count ? spec.weight_count : t.size();
        for (std::size_t i = 0; i < n; ++i) t[i] = dist(rng);
        break;
      }
    }
    params_.add(spec.name, spec.group, std::move(t));
  }
}

AcousticModel::AcousticModel(ModelConfig cfg, ad::ParameterStore params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size()) {
    throw std::invalid_argument("parameter count " + std::to_string(params_.size()) + " does not match layout (" +
                                std::to_string(layout.size()) + ")");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_.name(i) != layout[i].name || params_.value(i).shape() != layout[i].shape) {
      throw std::invalid_argument("parameter " + params_.name(i) + " does not match layout entry " + layout[i].name +
                                  " " + ad::to_string(layout[i].shape));
    }
  }
}

void AcousticModel::check_sequence(const frontend::PhonemeSequence& seq) const {
  if (seq.tokens.empty()) throw std::invalid_argument("empty phoneme sequence");
  if (seq.labels.size() != seq.tokens.size()) throw std::invalid_argument("token/label length mismatch");
  if (seq.language >= cfg_.language_count) {
    throw std::out_of_range("language id " + std::to_string(seq.language) + " out of range");
  }
  if (seq.speaker >= cfg_.speaker_count) {
    throw std::out_of_range("speaker id " + std::to_string(seq.speaker) + " out of range");
  }
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (seq.tokens[i] >= cfg_.vocab_size) throw std::out_of_range("token id out of range");
    if (seq.labels[i] > cfg_.label_width) throw std::out_of_range("prosody label id out of range");
  }
}

Var AcousticModel::language_embedding(Graph& g, std::size_t language) const {
  if (language >= cfg_.language_count) throw std::out_of_range("language id " + std::to_string(language));
  return lookup_row(g, "lang_embed", language);
}

Var AcousticModel::generate_params(Graph& g, const std::string& site, Var lang_embedding) const {
  const auto w = params_.find(site + "/W");
  const auto b = params_.find(site + "/b");
  if (!w || !b) throw std::invalid_argument("unregistered generator site: " + site);
  return ad::add(ad::matmul(g.param(*w), lang_embedding), g.param(*b));
}

Var AcousticModel::encode(Graph& g, const frontend::PhonemeSequence& seq, Stream stream) const {
  check_sequence(seq);
  if (cfg_.single_stream != (stream == Stream::kJoint)) {
    throw std::invalid_argument("stream " + to_string(stream) + " is not part of this model");
  }
  const std::string prefix = stream_prefix(stream) + "_enc";
  const std::size_t len = seq.length();
  const std::size_t width = cfg_.label_width;
  std::vector<double> onehot(width * len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    if (seq.labels[i] < width) onehot[seq.labels[i] * len + i] = 1.0;
  }
  Var ipa = ad::embedding(g.param(prefix + "/ipa_table"), seq.tokens);
  Var pros = ad::matmul(g.param(prefix + "/prosody_table"), g.constant(Tensor::matrix(width, len, std::move(onehot))));
  const Var inputs[] = {ipa, pros};
  Var x = ad::concat(inputs, 0);

  Var lang = language_embedding(g, seq.language);
  const std::size_t d = cfg_.stream_dim(stream);
  for (std::size_t i = 0; i < cfg_.encoder_layers.size(); ++i) {
    const EncoderLayer& layer = cfg_.encoder_layers[i];
    const SiteShape site = site_shape(cfg_, stream, i);
    // Generated parameters depend only on the language, so utterances of one
    // language in the same graph share them.
    const std::string key = site_name(stream, i) + "@" + std::to_string(seq.language);
    Var theta;
    if (auto cached = g.memo(key)) {
      theta = *cached;
    } else {
      theta = generate_params(g, site_name(stream, i), lang);
      g.set_memo(key, theta);
    }
    Var weight = ad::flat_slice(theta, 0, ad::Shape{site.out, site.in * site.kernel});
    Var bias = ad::flat_slice(theta, site.out * site.in * site.kernel, ad::Shape{site.out});
    Var y = ad::conv1d(x, weight, bias, layer.kernel, layer.dilation);
    if (layer.kind == EncoderLayer::Kind::kConv) {
      x = layer.tanh ? ad::tanh(y) : y;
    } else {
      Var h = ad::slice(y, 0, 0, d);
      if (layer.tanh) h = ad::tanh(h);
      Var gate = ad::sigmoid(ad::slice(y, 0, d, d));
      // y = g*h + (1-g)*x
      x = ad::add(x, ad::mul(gate, ad::sub(h, x)));
    }
  }
  return x;
}

EncoderOutput AcousticModel::encode_all(Graph& g, const frontend::PhonemeSequence& seq) const {
  if (cfg_.single_stream) {
    EncoderOutput out;
    out.joint = encode(g, seq, Stream::kJoint);
    return out;
  }
  return concat_encoders(encode(g, seq, Stream::kPronunciation), encode(g, seq, Stream::kProsody));
}

Var AcousticModel::speaker_classifier(Graph& g, Var joint) const {
  Var h = ad::tanh(head(g, "spk_cls/l1", joint));
  return head(g, "spk_cls/l2", h);
}

Var AcousticModel::speaker_logits(Graph& g, Var joint, double lambda) const {
  return speaker_classifier(g, ad::gradient_reverse(joint, lambda));
}

Memory AcousticModel::prepare_memory(Graph& g, const EncoderOutput& encoded) const {
  Memory m;
  m.encoded = encoded;
  m.length = encoded.joint.value().cols();
  m.projected = ad::matmul(g.param("attn/memory_W"), encoded.joint);
  return m;
}

DecoderState AcousticModel::initial_state(Graph& g, std::size_t length) const {
  DecoderState s;
  s.attention = zero_state(g, cfg_.attention_lstm);
  s.pron = zero_state(g, cfg_.pron_decoder);
  s.pros = zero_state(g, cfg_.pros_decoder);
  s.context = g.constant(Tensor(ad::Shape{cfg_.joint_dim()}));
  std::vector<double> first(length, 0.0);
  first[0] = 1.0;
  s.alignment = column(g, std::move(first));
  return s;
}

Var AcousticModel::prenet(Graph& g, Var feedback) const {
  Var x = feedback;
  for (std::size_t k = 0; k < cfg_.prenet_layers; ++k) x = ad::tanh(head(g, "prenet/l" + std::to_string(k), x));
  return x;
}

AttentionResult AcousticModel::attention_step(Graph& g, Var prenet_out, const DecoderState& state,
                                              const Memory& memory) const {
  const std::size_t len = memory.length;
  const Var inputs[] = {prenet_out, state.context};
  ad::LstmState att = ad::lstm_step(ad::concat(inputs, 0), state.attention, g.param("attn_lstm/W"),
                                    g.param("attn_lstm/b"));
  Var query = ad::matmul(g.param("attn/query_W"), att.h);
  Var prev = ad::reshape(state.alignment, ad::Shape{1, len});
  Var location = ad::conv1d(prev, g.param("attn/location_filters"), g.param("attn/location_b"),
                            cfg_.location_width, 1);
  Var score = ad::add(memory.projected, ad::matmul(g.param("attn/location_W"), location));
  score = ad::add(ad::add(score, query), g.param("attn/b"));
  Var energies = ad::matmul(g.param("attn/v"), ad::tanh(score));
  Var alignment = ad::softmax(ad::reshape(energies, ad::Shape{len}), 0);
  Var context = ad::matmul(memory.encoded.joint, alignment);
  return {context, alignment, att};
}

StepResult AcousticModel::decoder_step(Graph& g, Var feedback, std::size_t speaker, const DecoderState& state,
                                       const Memory& memory) const {
  if (speaker >= cfg_.speaker_count) throw std::out_of_range("unknown speaker id " + std::to_string(speaker));
  if (feedback.value().size() != features::kStatDim) throw std::invalid_argument("feedback must have 42 values");
  AttentionResult att = attention_step(g, prenet(g, feedback), state, memory);
  StepResult r;
  r.state = state;
  r.state.attention = att.attention;
  r.state.context = att.context;
  r.state.alignment = att.alignment;
  if (cfg_.single_stream) {
    Var spk = lookup_row(g, "joint_dec/speaker_table", speaker);
    const Var inputs[] = {spk, att.context};
    Var in = ad::concat(inputs, 0);
    r.state.pron = ad::lstm_step(in, state.pron, g.param("joint_dec/lstm/W"), g.param("joint_dec/lstm/b"));
    Var h = r.state.pron.h;
    r.out.mcep = head(g, "joint_dec/mcep", h);
    r.out.stop = ad::sigmoid(head(g, "joint_dec/stop", h));
    r.out.energy = head(g, "joint_dec/energy", h);
    r.out.logf0 = head(g, "joint_dec/logf0", h);
    r.out.vuv = ad::sigmoid(head(g, "joint_dec/vuv", h));
    r.out.prosody_input = in;
    return r;
  }
  auto [ctx_a, ctx_p] = split_context(att.context, cfg_);
  r.state.pron = ad::lstm_step(ctx_a, state.pron, g.param("pron_dec/lstm/W"), g.param("pron_dec/lstm/b"));
  r.out.mcep = head(g, "pron_dec/mcep", r.state.pron.h);
  r.out.stop = ad::sigmoid(head(g, "pron_dec/stop", r.state.pron.h));

  Var spk = lookup_row(g, "pros_dec/speaker_table", speaker);
  const Var inputs[] = {spk, ctx_p};
  Var in = ad::concat(inputs, 0);
  r.state.pros = ad::lstm_step(in, state.pros, g.param("pros_dec/lstm/W"), g.param("pros_dec/lstm/b"));
  r.out.energy = head(g, "pros_dec/energy", r.state.pros.h);
  r.out.logf0 = head(g, "pros_dec/logf0", r.state.pros.h);
  r.out.vuv = ad::sigmoid(head(g, "pros_dec/vuv", r.state.pros.h));
  r.out.prosody_input = in;
  return r;
}

TeacherForcedOutput AcousticModel::teacher_forced(Graph& g, const frontend::PhonemeSequence& seq,
                                                  const features::FeatureTrack& target, double lambda,
                                                  bool reverse_speaker_gradient) const {
  check_sequence(seq);
  const std::size_t frames = target.frame_count();
  if (frames == 0) throw std::invalid_argument("teacher forcing needs a nonempty target");
  TeacherForcedOutput out;
  out.encoded = encode_all(g, seq);
  const Memory memory = prepare_memory(g, out.encoded);
  DecoderState state = initial_state(g, memory.length);
  std::vector<Var> mcep, energy, logf0, vuv, stop;
  for (std::size_t t = 0; t < frames; ++t) {
    Var feedback = t == 0 ? g.constant(Tensor(ad::Shape{features::kStatDim})) : g.constant(feedback_frame(target, t - 1));
    StepResult step = decoder_step(g, feedback, seq.speaker, state, memory);
    mcep.push_back(step.out.mcep);
    energy.push_back(step.out.energy);
    logf0.push_back(step.out.logf0);
    vuv.push_back(step.out.vuv);
    stop.push_back(step.out.stop);
    out.alignments.push_back(step.state.alignment);
    state = step.state;
  }
  out.mcep = ad::concat(mcep, 1);
  out.energy = ad::concat(energy, 1);
  out.logf0 = ad::concat(logf0, 1);
  out.vuv = ad::concat(vuv, 1);
  out.stop = ad::concat(stop, 1);
  out.speaker_logits = reverse_speaker_gradient ? speaker_logits(g, out.encoded.joint, lambda)
                                                : speaker_classifier(g, out.encoded.joint);
  return out;
}

SynthesisResult AcousticModel::synthesize(const frontend::PhonemeSequence& seq, std::size_t max_frames,
                                          const features::NormStats* stats) const {
  if (seq.tokens.empty()) throw std::invalid_argument("cannot synthesize an empty sequence");
  if (max_frames == 0) throw std::invalid_argument("max_frames must be at least 1");
  check_sequence(seq);
  Graph g(&params_);
  const EncoderOutput encoded = encode_all(g, seq);
  const Memory memory = prepare_memory(g, encoded);
  DecoderState state = initial_state(g, memory.length);
  Var feedback = g.constant(Tensor(ad::Shape{features::kStatDim}));

  SynthesisResult result;
  std::vector<double> values;
  bool stopped = false;
  for (std::size_t t = 0; t < max_frames && !stopped; ++t) {
    StepResult step = decoder_step(g, feedback, seq.speaker, state, memory);
    state = step.state;
    const auto mcep = step.out.mcep.value().values();
    const bool voiced = step.out.vuv.value()[0] > 0.5;
    std::vector<double> next(features::kStatDim);
    for (std::size_t d = 0; d < features::kMcepDim; ++d) next[d] = mcep[d];
    next[features::kEnergyIndex] = step.out.energy.value()[0];
    next[features::kLogF0Index] = step.out.logf0.value()[0];
    values.insert(values.end(), next.begin(), next.end());
    if (!voiced) values[values.size() - 1] = 0.0;
    values.push_back(voiced ? 1.0 : 0.0);
    const auto& a = step.state.alignment.value();
    result.alignments.emplace_back(a.data().begin(), a.data().end());
    stopped = step.out.stop.value()[0] > 0.5;
    feedback = g.constant(Tensor::vector(std::move(next)));
  }
  result.truncated = !stopped;
  const std::size_t frames = values.size() / features::kFrameWidth;
  features::FeatureTrack normalized(frames, std::move(values));
  result.track = stats ? features::denormalize(normalized, *stats) : normalized;
  return result;
}

}  // namespace dsam::model
