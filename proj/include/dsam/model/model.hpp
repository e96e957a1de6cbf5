#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsam/autodiff/graph.hpp"
#include "dsam/autodiff/ops.hpp"
#include "dsam/features.hpp"
#include "dsam/frontend.hpp"
#include "dsam/model/config.hpp"

namespace dsam::model {

using ad::Graph;
using ad::Var;

struct EncoderOutput {
  Var pron;   // X_a [D_a, L] (unset in single-stream mode)
  Var pros;   // X_p [D_p, L] (unset in single-stream mode)
  Var joint;  // X [(D_a + D_p), L]
};

// Stacks X_a above X_p; both must have the same length.
EncoderOutput concat_encoders(Var pron, Var pros);

// Splits a context vector into its D_a and D_p parts.
std::pair<Var, Var> split_context(Var context, const ModelConfig& cfg);

struct DecoderState {
  ad::LstmState attention;
  ad::LstmState pron;  // joint decoder in single-stream mode
  ad::LstmState pros;
  Var context;
  Var alignment;
};

struct AttentionResult {
  Var context;    // [D_a + D_p]
  Var alignment;  // [L]
  ad::LstmState attention;
};

struct DecoderStepOutput {
  Var mcep;    // [40]
  Var stop;    // [1] probability
  Var energy;  // [1]
  Var logf0;   // [1]
  Var vuv;     // [1] probability
  // Prosody-stream LSTM input, exposed for wiring checks.
  Var prosody_input;
};

struct StepResult {
  DecoderStepOutput out;
  DecoderState state;
};

// Per-utterance decoder memory computed once from the encoder output.
struct Memory {
  EncoderOutput encoded;
  Var projected;  // attn/memory_W * X, [A, L]
  std::size_t length = 0;
};

struct TeacherForcedOutput {
  EncoderOutput encoded;
  Var mcep;            // [40, T]
  Var energy;          // [1, T]
  Var logf0;           // [1, T]
  Var vuv;             // [1, T]
  Var stop;            // [1, T]
  Var speaker_logits;  // [S, L]
  std::vector<Var> alignments;  // T vectors of length L
};

struct SynthesisResult {
  features::FeatureTrack track;
  bool truncated = false;
  std::vector<std::vector<double>> alignments;
};

class AcousticModel {
 public:
  // Fresh parameters drawn from the documented initialization.
  AcousticModel(ModelConfig cfg, std::uint64_t seed);
  // Adopts existing parameters; names and shapes must match the layout.
  AcousticModel(ModelConfig cfg, ad::ParameterStore params);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  Var language_embedding(Graph& g, std::size_t language) const;
  // theta = W_site * e + b_site, flat.
  Var generate_params(Graph& g, const std::string& site, Var lang_embedding) const;
  Var encode(Graph& g, const frontend::PhonemeSequence& seq, Stream stream) const;
  EncoderOutput encode_all(Graph& g, const frontend::PhonemeSequence& seq) const;

  // Per-timestep logits [S, L] of the speaker classifier applied directly.
  Var speaker_classifier(Graph& g, Var joint) const;
  // The adversarial path: classifier behind a gradient reversal of strength lambda.
  Var speaker_logits(Graph& g, Var joint, double lambda) const;

  Memory prepare_memory(Graph& g, const EncoderOutput& encoded) const;
  DecoderState initial_state(Graph& g, std::size_t length) const;
  Var prenet(Graph& g, Var feedback) const;
  AttentionResult attention_step(Graph& g, Var prenet_out, const DecoderState& state, const Memory& memory) const;
  StepResult decoder_step(Graph& g, Var feedback, std::size_t speaker, const DecoderState& state,
                          const Memory& memory) const;

  // Teacher-forced pass over a normalized target track.
  // Without the reversal the speaker logits see the encoder directly, which
  // makes -lambda * loss_spk an ordinary differentiable term (gradient checks).
  TeacherForcedOutput teacher_forced(Graph& g, const frontend::PhonemeSequence& seq,
                                     const features::FeatureTrack& normalized_target, double lambda,
                                     bool reverse_speaker_gradient = true) const;

  // Free-running synthesis. The result is denormalized when stats are given.
  SynthesisResult synthesize(const frontend::PhonemeSequence& seq, std::size_t max_frames,
                             const features::NormStats* stats) const;

 private:
  void check_sequence(const frontend::PhonemeSequence& seq) const;

  ModelConfig cfg_;
  ad::ParameterStore params_;
};

// Fills the data-dependent sizes (vocabulary, label width, language and
// speaker counts) from a corpus.
void size_for_corpus(ModelConfig& cfg, const features::Corpus& corpus);

// Feedback vector (normalized mcep, energy, logF0) of a frame; 42 values.
ad::Tensor feedback_frame(const features::FeatureTrack& track, std::size_t t);

}  // namespace dsam::model
