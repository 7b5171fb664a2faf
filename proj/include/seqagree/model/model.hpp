#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "seqagree/autodiff/graph.hpp"
#include "seqagree/model/sequence.hpp"

namespace seqagree::model {

enum class Direction : std::uint8_t { kForward = 0, kBackward = 1 };

std::string_view direction_name(Direction d);

struct ModelConfig {
  std::size_t vocab_size = 12;
  std::size_t feature_dim = 8;
  std::size_t embed_dim = 16;
  std::size_t encoder_dim = 32;
  std::size_t decoder_dim = 32;
  std::size_t attention_dim = 16;
  std::size_t location_filters = 8;
  std::size_t location_width = 5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Gated recurrent cell, gate order (update, reset, candidate) along columns:
//   z = sigmoid(x Wz + bz + h Uz + cz)
//   r = sigmoid(x Wr + br + h Ur + cr)
//   n = tanh(x Wn + bn + r * (h Un + cn))
//   h' = n + z * (h - n)
struct GruParams {
  ad::Parameter w_input;   // in x 3d
  ad::Parameter w_hidden;  // d x 3d
  ad::Parameter b_input;   // 1 x 3d
  ad::Parameter b_hidden;  // 1 x 3d
};

struct EncoderParams {
  ad::Parameter embedding;  // V x d_e
  GruParams gru;
};

// Location-sensitive attention: e_j = v . tanh(W s + V h_j + U f_j + b)
// with f = conv1d(cumulative alignment).
struct AttentionParams {
  ad::Parameter query;             // d_s x d_a
  ad::Parameter key;               // d_h x d_a
  ad::Parameter location_filters;  // {K, 1, F}
  ad::Parameter location_proj;     // F x d_a
  ad::Parameter bias;              // 1 x d_a
  ad::Parameter score;             // d_a x 1
};

struct DecoderParams {
  Direction direction = Direction::kForward;
  AttentionParams attention;
  GruParams gru;           // input is [previous frame, context]
  ad::Parameter frame_w;   // d_s x D
  ad::Parameter frame_b;   // 1 x D
  ad::Parameter stop_w;    // d_s x 1
  ad::Parameter stop_b;    // 1 x 1
};

void collect(EncoderParams& p, std::vector<ad::Parameter*>& out);
void collect(DecoderParams& p, std::vector<ad::Parameter*>& out);

/// Encoder + attention + decoder + heads for one decoding direction.
class DirectionalModel {
 public:
  static DirectionalModel create(const ModelConfig& config, Direction direction, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Direction direction() const { return decoder.direction; }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  EncoderParams encoder;
  DecoderParams decoder;

 private:
  ModelConfig config_;
};

/// Shared encoder feeding a forward and a backward decoder stack.
class BiDecoderModel {
 public:
  static BiDecoderModel create(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  DecoderParams& decoder(Direction d) { return d == Direction::kForward ? forward_decoder : backward_decoder; }
  const DecoderParams& decoder(Direction d) const {
    return d == Direction::kForward ? forward_decoder : backward_decoder;
  }

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::vector<ad::Parameter*> encoder_parameters();
  std::vector<ad::Parameter*> decoder_parameters(Direction d);

  EncoderParams encoder;
  DecoderParams forward_decoder;
  DecoderParams backward_decoder;

 private:
  ModelConfig config_;
};

void reset_access_counts(const std::vector<const ad::Parameter*>& params);
std::uint64_t total_access_count(const std::vector<const ad::Parameter*>& params);

// ---------------------------------------------------------------------------
// Parameters bound into a graph for one pass.

struct BoundGru {
  ad::Var w_input, w_hidden, b_input, b_hidden;
  std::size_t dim = 0;
};

struct BoundEncoder {
  ad::Var embedding;
  BoundGru gru;
  std::size_t vocab_size = 0;
};

struct BoundAttention {
  ad::Var query, key, location_filters, location_proj, bias, score;
};

struct BoundDecoder {
  Direction direction = Direction::kForward;
  BoundAttention attention;
  BoundGru gru;
  ad::Var frame_w, frame_b, stop_w, stop_b;
  std::size_t state_dim = 0;
  std::size_t feature_dim = 0;
};

BoundEncoder bind(ad::Graph& g, EncoderParams& p, bool trainable);
BoundEncoder bind(ad::Graph& g, const EncoderParams& p);
BoundDecoder bind(ad::Graph& g, DecoderParams& p, bool trainable);
BoundDecoder bind(ad::Graph& g, const DecoderParams& p);

// ---------------------------------------------------------------------------
// Pass-level state.

struct EncoderOutput {
  ad::Var hidden;  // T x d_h
  std::size_t length = 0;
};

/// Encoder rows plus their key projection for one decoder's attention.
struct AttentionMemory {
  ad::Var hidden;  // T x d_h
  ad::Var keys;    // T x d_a
  std::size_t length = 0;
};

struct AttentionState {
  ad::Var prev_alignment;  // 1 x T, on the simplex
  ad::Var cumulative;      // T x 1, sum of all emitted alignments
  std::size_t length = 0;

  /// Uniform previous alignment and zero cumulative alignment.
  static AttentionState initial(ad::Graph& g, std::size_t length);
};

struct DecoderState {
  ad::Var state;  // 1 x d_s
  Direction direction = Direction::kForward;

  static DecoderState initial(ad::Graph& g, std::size_t dim, Direction direction);
};

struct AttentionResult {
  ad::Var context;    // 1 x d_h
  ad::Var alignment;  // 1 x T
  AttentionState next;
};

struct StepResult {
  DecoderState state;
  ad::Var frame;       // 1 x D
  ad::Var stop_logit;  // 1 x 1
  ad::Var alignment;   // 1 x T
  AttentionState attention;
};

/// Everything one decoding pass produced, indexed by absolute target
/// position regardless of the direction in which it was generated.
struct PassResult {
  Direction direction = Direction::kForward;
  std::size_t length = 0;
  ad::Var frames;       // T' x D
  ad::Var stop_logits;  // T' x 1
  ad::Var states;       // T' x d_s
  ad::Var alignments;   // T' x T
  std::vector<ad::Var> state_rows;

  FeatureSequence predicted() const { return FeatureSequence::from_tensor(frames.value()); }
};

struct PassOptions {
  // Probability of feeding the model's own previous frame instead of the
  // ground truth (scheduled sampling). Zero disables sampling entirely.
  double sampling_p = 0.0;
  std::mt19937_64* rng = nullptr;
};

EncoderOutput encode(const BoundEncoder& enc, const SymbolSequence& x);

AttentionMemory attention_memory(const BoundAttention& attn, const EncoderOutput& enc);

AttentionResult attend(const BoundAttention& attn, const DecoderState& state, const AttentionMemory& memory,
                       const AttentionState& astate);

StepResult decoder_step(const BoundDecoder& dec, const DecoderState& prev, ad::Var prev_frame,
                        const AttentionMemory& memory, const AttentionState& astate);

/// Forward direction feeds y[t-1] at position t; backward runs from the last
/// position down and feeds y[t+1]. Boundary inputs are zero frames.
PassResult teacher_forced_pass(const BoundDecoder& dec, const EncoderOutput& enc, const FeatureSequence& y,
                               const PassOptions& options = {});

/// Autoregressive decoding on the decoder's own outputs. Stops after the
/// first frame whose stop probability exceeds `stop_threshold`, or at
/// `max_len`.
PassResult free_run_decode(const BoundDecoder& dec, const EncoderOutput& enc, std::size_t max_len,
                           double stop_threshold);

// Read-only conveniences that bind a whole model into `g`.
PassResult teacher_forced_pass(ad::Graph& g, const DirectionalModel& m, const SymbolSequence& x,
                               const FeatureSequence& y);
PassResult free_run_decode(ad::Graph& g, const DirectionalModel& m, const SymbolSequence& x, std::size_t max_len,
                           double stop_threshold);
/// Touches only the encoder and the forward decoder.
PassResult free_run_decode(ad::Graph& g, const BiDecoderModel& m, const SymbolSequence& x, std::size_t max_len,
                           double stop_threshold);

/// Stop targets by position: 1 at the last position generated in `direction`.
ad::Tensor stop_targets(std::size_t length, Direction direction);

}  // namespace seqagree::model
