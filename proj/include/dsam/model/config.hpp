#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dsam/autodiff/tensor.hpp"
#include "json.hpp"

namespace dsam::model {

enum class Stream { kPronunciation, kProsody, kJoint };
std::string to_string(Stream s);
Stream parse_stream(const std::string& name);

struct EncoderLayer {
  enum class Kind { kConv, kHighway };
  Kind kind = Kind::kConv;
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  bool tanh = false;  // conv output, or the candidate h of a highway layer
};

// Two plain conv layers followed by twelve highway conv layers with the
// DCTTS text-encoder kernel/dilation pattern.
std::vector<EncoderLayer> default_encoder_plan();

struct ModelConfig {
  std::size_t pron_dim = 32;  // D_a
  std::size_t pros_dim = 16;  // D_p
  std::size_t ipa_embed = 32;
  std::size_t prosody_embed = 8;
  std::size_t language_embed = 8;
  std::size_t speaker_embed = 8;
  std::vector<EncoderLayer> encoder_layers = default_encoder_plan();
  std::size_t prenet_dim = 64;
  std::size_t prenet_layers = 2;
  std::size_t attention_lstm = 64;
  std::size_t attention_dim = 32;
  std::size_t location_filters = 8;
  std::size_t location_width = 15;
  std::size_t pron_decoder = 64;
  std::size_t pros_decoder = 32;
  std::size_t classifier_hidden = 64;
  // Data-dependent sizes.
  std::size_t vocab_size = 0;
  std::size_t label_width = 8;  // M + N
  std::size_t language_count = 0;
  std::size_t speaker_count = 0;
  // One encoder of width D_a + D_p and one decoder for all 43 dims.
  bool single_stream = false;

  // Full-size widths, used for the parameter census.
  static ModelConfig full_scale();

  std::size_t joint_dim() const { return pron_dim + pros_dim; }
  std::size_t stream_dim(Stream s) const;
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& cfg);

struct ParamSpec {
  std::string name;
  std::string group;
  ad::Shape shape;
  enum class Init { kZero, kFanIn, kEmbedding } init = Init::kFanIn;
  std::size_t fan_in = 1;
  // For generator biases: prefix [0, weight_count) initialized with fan_in, rest zero.
  std::size_t weight_count = 0;
};

// Every trainable tensor of a configuration, in creation order.
std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);
// Element counts per parameter group.
std::map<std::string, std::size_t> parameter_census(const ModelConfig& cfg);

// Flattened size of generated encoder layer `index` for a stream.
struct SiteShape {
  std::size_t in = 0;
  std::size_t out = 0;  // conv output channels (2 * D for highway layers)
  std::size_t kernel = 1;
  std::size_t flat_size() const { return out * in * kernel + out; }
};
SiteShape site_shape(const ModelConfig& cfg, Stream stream, std::size_t layer);
std::vector<Stream> encoder_streams(const ModelConfig& cfg);
std::string stream_prefix(Stream s);
std::string site_name(Stream s, std::size_t layer);

}  // namespace dsam::model
