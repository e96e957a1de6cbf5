#include "dsam/model/config.hpp"

#include <set>
#include <stdexcept>

#include "dsam/errors.hpp"
#include "dsam/features.hpp"

namespace dsam::model {

std::string to_string(Stream s) {
  switch (s) {
    case Stream::kPronunciation:
      return "pronunciation";
    case Stream::kProsody:
      return "prosody";
    case Stream::kJoint:
      return "joint";
  }
  return "joint";
}

Stream parse_stream(const std::string& name) {
  if (name == "pronunciation" || name == "pron") return Stream::kPronunciation;
  if (name == "prosody" || name == "pros") return Stream::kProsody;
  if (name == "joint") return Stream::kJoint;
  throw std::invalid_argument("unknown stream: " + name);
}

std::vector<EncoderLayer> default_encoder_plan() {
  using K = EncoderLayer::Kind;
  std::vector<EncoderLayer> plan = {{K::kConv, 1, 1, true}, {K::kConv, 1, 1, true}};
  for (int rep = 0; rep < 2; ++rep) {
    for (std::size_t d : {1, 3, 9, 27}) plan.push_back({K::kHighway, 3, d, true});
  }
  plan.push_back({K::kHighway, 3, 1, true});
  plan.push_back({K::kHighway, 3, 1, true});
  plan.push_back({K::kHighway, 1, 1, true});
  plan.push_back({K::kHighway, 1, 1, true});
  return plan;
}

ModelConfig ModelConfig::full_scale() {
  ModelConfig cfg;
  cfg.pron_dim = 256;
  cfg.pros_dim = 128;
  cfg.ipa_embed = 512;
  cfg.prosody_embed = 16;
  cfg.pron_decoder = 1024;
  cfg.pros_decoder = 256;
  cfg.prenet_dim = 256;
  cfg.attention_lstm = 1024;
  cfg.attention_dim = 128;
  cfg.location_filters = 32;
  cfg.location_width = 31;
  cfg.classifier_hidden = 256;
  return cfg;
}

std::size_t ModelConfig::stream_dim(Stream s) const {
  switch (s) {
    case Stream::kPronunciation:
      return pron_dim;
    case Stream::kProsody:
      return pros_dim;
    case Stream::kJoint:
      return joint_dim();
  }
  return joint_dim();
}

void ModelConfig::validate() const {
  const std::size_t dims[] = {pron_dim,       pros_dim,      ipa_embed,         prosody_embed,   language_embed,
                              speaker_embed,  prenet_dim,    prenet_layers,     attention_lstm,  attention_dim,
                              location_filters, location_width, pron_decoder,   pros_decoder,    classifier_hidden,
                              vocab_size,     label_width,   language_count,    speaker_count};
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("model: all extents must be positive (check vocabulary/language/speaker counts)");
  }
  if (encoder_layers.size() != 14) throw ConfigError("model: encoder plan must have 14 layers");
  for (const auto& l : encoder_layers) {
    if (l.kernel % 2 == 0) throw ConfigError("model: encoder kernels must be odd");
    if (l.dilation == 0) throw ConfigError("model: encoder dilation must be positive");
  }
  if (location_width % 2 == 0) throw ConfigError("model: location filter width must be odd");
  if (speaker_count < 2) throw ConfigError("model: the speaker classifier needs at least two speakers");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : cfg.encoder_layers) {
    layers.push_back({{"kind", l.kind == EncoderLayer::Kind::kConv ? "conv" : "highway"},
                      {"kernel", l.kernel},
                      {"dilation", l.dilation},
                      {"tanh", l.tanh}});
  }
  j = {{"pron_dim", cfg.pron_dim},
       {"pros_dim", cfg.pros_dim},
       {"ipa_embed", cfg.ipa_embed},
       {"prosody_embed", cfg.prosody_embed},
       {"language_embed", cfg.language_embed},
       {"speaker_embed", cfg.speaker_embed},
       {"encoder_layers", layers},
       {"prenet_dim", cfg.prenet_dim},
       {"prenet_layers", cfg.prenet_layers},
       {"attention_lstm", cfg.attention_lstm},
       {"attention_dim", cfg.attention_dim},
       {"location_filters", cfg.location_filters},
       {"location_width", cfg.location_width},
       {"pron_decoder", cfg.pron_decoder},
       {"pros_decoder", cfg.pros_decoder},
       {"classifier_hidden", cfg.classifier_hidden},
       {"vocab_size", cfg.vocab_size},
       {"label_width", cfg.label_width},
       {"language_count", cfg.language_count},
       {"speaker_count", cfg.speaker_count},
       {"single_stream", cfg.single_stream}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  static const std::set<std::string> known = {
      "pron_dim",       "pros_dim",       "ipa_embed",      "prosody_embed",  "language_embed",
      "speaker_embed",  "encoder_layers", "prenet_dim",     "prenet_layers",  "attention_lstm",
      "attention_dim",  "location_filters", "location_width", "pron_decoder", "pros_decoder",
      "classifier_hidden", "vocab_size",  "label_width",    "language_count", "speaker_count",
      "single_stream"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("model: unknown key \"" + it.key() + "\"");
  }
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  opt("pron_dim", cfg.pron_dim);
  opt("pros_dim", cfg.pros_dim);
  opt("ipa_embed", cfg.ipa_embed);
  opt("prosody_embed", cfg.prosody_embed);
  opt("language_embed", cfg.language_embed);
  opt("speaker_embed", cfg.speaker_embed);
  if (j.contains("encoder_layers")) {
    cfg.encoder_layers.clear();
    for (const auto& l : j.at("encoder_layers")) {
      EncoderLayer layer;
      const std::string kind = l.at("kind").get<std::string>();
      if (kind == "conv") {
        layer.kind = EncoderLayer::Kind::kConv;
      } else if (kind == "highway") {
        layer.kind = EncoderLayer::Kind::kHighway;
      } else {
        throw ConfigError("model: unknown encoder layer kind " + kind);
      }
      layer.kernel = l.value("kernel", std::size_t{1});
      layer.dilation = l.value("dilation", std::size_t{1});
      layer.tanh = l.value("tanh", false);
      cfg.encoder_layers.push_back(layer);
    }
  }
  opt("prenet_dim", cfg.prenet_dim);
  opt("prenet_layers", cfg.prenet_layers);
  opt("attention_lstm", cfg.attention_lstm);
  opt("attention_dim", cfg.attention_dim);
  opt("location_filters", cfg.location_filters);
  opt("location_width", cfg.location_width);
  opt("pron_decoder", cfg.pron_decoder);
  opt("pros_decoder", cfg.pros_decoder);
  opt("classifier_hidden", cfg.classifier_hidden);
  opt("vocab_size", cfg.vocab_size);
  opt("label_width", cfg.label_width);
  opt("language_count", cfg.language_count);
  opt("speaker_count", cfg.speaker_count);
  opt("single_stream", cfg.single_stream);
}

std::vector<Stream> encoder_streams(const ModelConfig& cfg) {
  if (cfg.single_stream) return {Stream::kJoint};
  return {Stream::kPronunciation, Stream::kProsody};
}

std::string stream_prefix(Stream s) {
  switch (s) {
    case Stream::kPronunciation:
      return "pron";
    case Stream::kProsody:
      return "pros";
    case Stream::kJoint:
      return "joint";
  }
  return "joint";
}

std::string site_name(Stream s, std::size_t layer) {
  return stream_prefix(s) + "_enc/gen" + std::to_string(layer);
}

SiteShape site_shape(const ModelConfig& cfg, Stream stream, std::size_t layer) {
  if (layer >= cfg.encoder_layers.size()) throw std::out_of_range("encoder layer index " + std::to_string(layer));
  const std::size_t d = cfg.stream_dim(stream);
  const EncoderLayer& l = cfg.encoder_layers[layer];
  SiteShape s;
  s.in = layer == 0 ? cfg.ipa_embed + cfg.prosody_embed : d;
  s.out = l.kind == EncoderLayer::Kind::kHighway ? 2 * d : d;
  s.kernel = l.kernel;
  return s;
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  using Init = ParamSpec::Init;
  std::vector<ParamSpec> out;
  auto matrix = [&](std::string name, std::string group, std::size_t rows, std::size_t cols) {
    out.push_back({std::move(name), std::move(group), {rows, cols}, Init::kFanIn, cols, 0});
  };
  auto bias = [&](std::string name, std::string group, std::size_t n) {
    out.push_back({std::move(name), std::move(group), {n}, Init::kZero, 1, 0});
  };
  auto table = [&](std::string name, std::string group, std::size_t rows, std::size_t cols) {
    out.push_back({std::move(name), std::move(group), {rows, cols}, Init::kEmbedding, cols, 0});
  };
  auto lstm = [&](const std::string& prefix, const std::string& group, std::size_t in, std::size_t hidden) {
    matrix(prefix + "/W", group, 4 * hidden, in + hidden);
    bias(prefix + "/b", group, 4 * hidden);
  };
  auto head = [&](const std::string& prefix, const std::string& group, std::size_t out_dim, std::size_t in) {
    matrix(prefix + "/W", group, out_dim, in);
    bias(prefix + "/b", group, out_dim);
  };

  table("lang_embed", "shared", cfg.language_count, cfg.language_embed);
  for (Stream s : encoder_streams(cfg)) {
    const std::string group = stream_prefix(s) + "_enc";
    table(group + "/ipa_table", group, cfg.vocab_size, cfg.ipa_embed);
    // Multiplies the M+N one-hot label so the no-prosody label embeds to zero.
    table(group + "/prosody_table", group, cfg.prosody_embed, cfg.label_width);
    for (std::size_t i = 0; i < cfg.encoder_layers.size(); ++i) {
      const SiteShape site = site_shape(cfg, s, i);
      const std::string name = site_name(s, i);
      out.push_back({name + "/W", group, {site.flat_size(), cfg.language_embed}, Init::kZero, 1, 0});
      out.push_back({name + "/b", group, {site.flat_size()}, Init::kFanIn, site.in * site.kernel,
                     site.out * site.in * site.kernel});
    }
  }

  std::size_t in = features::kStatDim;
  for (std::size_t k = 0; k < cfg.prenet_layers; ++k) {
    head("prenet/l" + std::to_string(k), "shared", cfg.prenet_dim, in);
    in = cfg.prenet_dim;
  }
  const std::size_t d = cfg.joint_dim();
  lstm("attn_lstm", "shared", cfg.prenet_dim + d, cfg.attention_lstm);
  matrix("attn/query_W", "shared", cfg.attention_dim, cfg.attention_lstm);
  matrix("attn/memory_W", "shared", cfg.attention_dim, d);
  matrix("attn/location_filters", "shared", cfg.location_filters, cfg.location_width);
  bias("attn/location_b", "shared", cfg.location_filters);
  matrix("attn/location_W", "shared", cfg.attention_dim, cfg.location_filters);
  bias("attn/b", "shared", cfg.attention_dim);
  matrix("attn/v", "shared", 1, cfg.attention_dim);

  if (cfg.single_stream) {
    table("joint_dec/speaker_table", "joint_dec", cfg.speaker_count, cfg.speaker_embed);
    lstm("joint_dec/lstm", "joint_dec", cfg.speaker_embed + d, cfg.pron_decoder);
    head("joint_dec/mcep", "joint_dec", features::kMcepDim, cfg.pron_decoder);
    head("joint_dec/stop", "joint_dec", 1, cfg.pron_decoder);
    head("joint_dec/energy", "joint_dec", 1, cfg.pron_decoder);
    head("joint_dec/logf0", "joint_dec", 1, cfg.pron_decoder);
    head("joint_dec/vuv", "joint_dec", 1, cfg.pron_decoder);
  } else {
    lstm("pron_dec/lstm", "pron_dec", cfg.pron_dim, cfg.pron_decoder);
    head("pron_dec/mcep", "pron_dec", features::kMcepDim, cfg.pron_decoder);
    head("pron_dec/stop", "pron_dec", 1, cfg.pron_decoder);
    table("pros_dec/speaker_table", "pros_dec", cfg.speaker_count, cfg.speaker_embed);
    lstm("pros_dec/lstm", "pros_dec", cfg.speaker_embed + cfg.pros_dim, cfg.pros_decoder);
    head("pros_dec/energy", "pros_dec", 1, cfg.pros_decoder);
    head("pros_dec/logf0", "pros_dec", 1, cfg.pros_decoder);
    head("pros_dec/vuv", "pros_dec", 1, cfg.pros_decoder);
  }

  head("spk_cls/l1", "classifier", cfg.classifier_hidden, d);
  head("spk_cls/l2", "classifier", cfg.speaker_count, cfg.classifier_hidden);
  return out;
}

std::map<std::string, std::size_t> parameter_census(const ModelConfig& cfg) {
  std::map<std::string, std::size_t> census;
  for (const auto& p : parameter_layout(cfg)) census[p.group] += ad::element_count(p.shape);
  return census;
}

}  // namespace dsam::model
