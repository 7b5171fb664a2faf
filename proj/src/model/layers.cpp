#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "seqagree/errors.hpp"
#include "seqagree/model/model.hpp"

namespace seqagree::model {

using ad::Var;

namespace {

Var gru_step(const BoundGru& cell, Var x, Var h) {
  const std::size_t d = cell.dim;
  Var xw = ad::add(ad::matmul(x, cell.w_input), cell.b_input);
  Var hw = ad::add(ad::matmul(h, cell.w_hidden), cell.b_hidden);
  Var z = ad::sigmoid(ad::add(ad::slice(xw, 1, 0, d), ad::slice(hw, 1, 0, d)));
  Var r = ad::sigmoid(ad::add(ad::slice(xw, 1, d, 2 * d), ad::slice(hw, 1, d, 2 * d)));
  Var n = ad::tanh(ad::add(ad::slice(xw, 1, 2 * d, 3 * d), ad::mul(r, ad::slice(hw, 1, 2 * d, 3 * d))));
  return ad::add(n, ad::mul(z, ad::sub(h, n)));
}

Var row_constant(ad::Graph& g, std::span<const double> row) {
  return g.constant(ad::Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end())));
}

PassResult assemble(Direction direction, std::vector<Var>& frames, std::vector<Var>& stops,
                    std::vector<Var>& states, std::vector<Var>& alignments) {
  PassResult r;
  r.direction = direction;
  r.length = frames.size();
  r.frames = ad::concat(frames, 0);
  r.stop_logits = ad::concat(stops, 0);
  r.states = ad::concat(states, 0);
  r.alignments = ad::concat(alignments, 0);
  r.state_rows = std::move(states);
  return r;
}

}  // namespace

AttentionState AttentionState::initial(ad::Graph& g, std::size_t length) {
  AttentionState s;
  s.length = length;
  s.prev_alignment = g.constant(ad::Tensor({1, length}, std::vector<double>(length, 1.0 / static_cast<double>(length))));
  s.cumulative = g.constant(ad::Tensor({length, 1}));
  return s;
}

DecoderState DecoderState::initial(ad::Graph& g, std::size_t dim, Direction direction) {
  return DecoderState{g.constant(ad::Tensor({1, dim})), direction};
}

EncoderOutput encode(const BoundEncoder& enc, const SymbolSequence& x) {
  if (x.tokens.empty()) throw ShapeError("encode: empty symbol sequence");
  ad::Graph& g = enc.embedding.graph();
  Var h = g.constant(ad::Tensor({1, enc.gru.dim}));
  std::vector<Var> rows;
  rows.reserve(x.size());
  for (int token : x.tokens) {
    if (token < 0 || static_cast<std::size_t>(token) >= enc.vocab_size) {
      throw VocabularyError("encode: token " + std::to_string(token) + " outside vocabulary of " +
                            std::to_string(enc.vocab_size));
    }
    const auto id = static_cast<std::size_t>(token);
    h = gru_step(enc.gru, ad::slice(enc.embedding, 0, id, id + 1), h);
    rows.push_back(h);
  }
  return EncoderOutput{ad::concat(rows, 0), x.size()};
}

AttentionMemory attention_memory(const BoundAttention& attn, const EncoderOutput& enc) {
  return AttentionMemory{enc.hidden, ad::matmul(enc.hidden, attn.key), enc.length};
}

AttentionResult attend(const BoundAttention& attn, const DecoderState& state, const AttentionMemory& memory,
                       const AttentionState& astate) {
  if (astate.length != memory.length) {
    throw ShapeError("attend: attention state covers " + std::to_string(astate.length) + " positions, encoder has " +
                     std::to_string(memory.length));
  }
  Var query = ad::add(ad::matmul(state.state, attn.query), attn.bias);
  Var location = ad::matmul(ad::conv1d_same(astate.cumulative, attn.location_filters), attn.location_proj);
  Var energy = ad::matmul(ad::tanh(ad::add(ad::add(memory.keys, location), query)), attn.score);
  Var alignment = ad::softmax(ad::transpose(energy), 1);

  AttentionResult r;
  r.context = ad::matmul(alignment, memory.hidden);
  r.alignment = alignment;
  r.next.length = astate.length;
  r.next.prev_alignment = alignment;
  r.next.cumulative = ad::add(astate.cumulative, ad::transpose(alignment));
  return r;
}

StepResult decoder_step(const BoundDecoder& dec, const DecoderState& prev, Var prev_frame,
                        const AttentionMemory& memory, const AttentionState& astate) {
  if (prev.direction != dec.direction) {
    throw DirectionError("decoder_step: " + std::string(direction_name(dec.direction)) + " decoder given a " +
                         std::string(direction_name(prev.direction)) + " state");
  }
  const auto& fshape = prev_frame.shape();
  if (prev_frame.value().size() != dec.feature_dim || prev_frame.value().rows() != 1) {
    throw ShapeError("decoder_step: previous frame " + ad::shape_string(fshape) + ", expected [1x" +
                     std::to_string(dec.feature_dim) + "]");
  }
  AttentionResult attn = attend(dec.attention, prev, memory, astate);
  const std::array<Var, 2> inputs{prev_frame, attn.context};
  Var s = gru_step(dec.gru, ad::concat(inputs, 1), prev.state);

  StepResult r;
  r.state = DecoderState{s, dec.direction};
  r.frame = ad::add(ad::matmul(s, dec.frame_w), dec.frame_b);
  r.stop_logit = ad::add(ad::matmul(s, dec.stop_w), dec.stop_b);
  r.alignment = attn.alignment;
  r.attention = attn.next;
  return r;
}

PassResult teacher_forced_pass(const BoundDecoder& dec, const EncoderOutput& enc, const FeatureSequence& y,
                               const PassOptions& options) {
  if (y.empty()) throw ShapeError("teacher_forced_pass: empty target");
  if (y.dim() != dec.feature_dim) {
    throw ShapeError("teacher_forced_pass: target dim " + std::to_string(y.dim()) + ", decoder emits " +
                     std::to_string(dec.feature_dim));
  }
  if (options.sampling_p < 0.0 || options.sampling_p > 1.0) {
    throw std::invalid_argument("teacher_forced_pass: sampling probability outside [0, 1]");
  }
  if (options.sampling_p > 0.0 && options.rng == nullptr) {
    throw std::invalid_argument("teacher_forced_pass: scheduled sampling needs an rng");
  }
  ad::Graph& g = enc.hidden.graph();
  const std::size_t n = y.length();
  const bool fwd = dec.direction == Direction::kForward;
  const AttentionMemory memory = attention_memory(dec.attention, enc);
  DecoderState state = DecoderState::initial(g, dec.state_dim, dec.direction);
  AttentionState astate = AttentionState::initial(g, enc.length);
  const Var boundary = g.constant(ad::Tensor({1, dec.feature_dim}));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<Var> frames(n), stops(n), states(n), alignments(n);
  Var previous_prediction;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pos = fwd ? k : n - 1 - k;
    Var feed = boundary;
    if (k > 0) {
      const bool sample = options.sampling_p > 0.0 && coin(*options.rng) < options.sampling_p;
      feed = sample ? g.detach(previous_prediction) : row_constant(g, y.row(fwd ? pos - 1 : pos + 1));
    }
    StepResult step = decoder_step(dec, state, feed, memory, astate);
    frames[pos] = step.frame;
    stops[pos] = step.stop_logit;
    states[pos] = step.state.state;
    alignments[pos] = step.alignment;
    previous_prediction = step.frame;
    state = step.state;
    astate = step.attention;
  }
  return assemble(dec.direction, frames, stops, states, alignments);
}

PassResult free_run_decode(const BoundDecoder& dec, const EncoderOutput& enc, std::size_t max_len,
                           double stop_threshold) {
  if (max_len == 0) throw std::invalid_argument("free_run_decode: max_len must be at least 1");
  if (!(stop_threshold > 0.0 && stop_threshold <= 1.0)) {
    throw std::invalid_argument("free_run_decode: stop threshold outside (0, 1]");
  }
  ad::Graph& g = enc.hidden.graph();
  const AttentionMemory memory = attention_memory(dec.attention, enc);
  DecoderState state = DecoderState::initial(g, dec.state_dim, dec.direction);
  AttentionState astate = AttentionState::initial(g, enc.length);
  Var feed = g.constant(ad::Tensor({1, dec.feature_dim}));

  std::vector<Var> frames, stops, states, alignments;
  for (std::size_t k = 0; k < max_len; ++k) {
    StepResult step = decoder_step(dec, state, feed, memory, astate);
    frames.push_back(step.frame);
    stops.push_back(step.stop_logit);
    states.push_back(step.state.state);
    alignments.push_back(step.alignment);
    feed = step.frame;
    state = step.state;
    astate = step.attention;
    const double logit = step.stop_logit.value()[0];
    const double probability = logit >= 0 ? 1.0 / (1.0 + std::exp(-logit)) : std::exp(logit) / (1.0 + std::exp(logit));
    if (probability > stop_threshold) break;
  }
  if (dec.direction == Direction::kBackward) {
    std::reverse(frames.begin(), frames.end());
    std::reverse(stops.begin(), stops.end());
    std::reverse(states.begin(), states.end());
    std::reverse(alignments.begin(), alignments.end());
  }
  return assemble(dec.direction, frames, stops, states, alignments);
}

PassResult teacher_forced_pass(ad::Graph& g, const DirectionalModel& m, const SymbolSequence& x,
                               const FeatureSequence& y) {
  const EncoderOutput enc = encode(bind(g, m.encoder), x);
  return teacher_forced_pass(bind(g, m.decoder), enc, y);
}

PassResult free_run_decode(ad::Graph& g, const DirectionalModel& m, const SymbolSequence& x, std::size_t max_len,
                           double stop_threshold) {
  const EncoderOutput enc = encode(bind(g, m.encoder), x);
  return free_run_decode(bind(g, m.decoder), enc, max_len, stop_threshold);
}

PassResult free_run_decode(ad::Graph& g, const BiDecoderModel& m, const SymbolSequence& x, std::size_t max_len,
                           double stop_threshold) {
  const EncoderOutput enc = encode(bind(g, m.encoder), x);
  return free_run_decode(bind(g, m.forward_decoder), enc, max_len, stop_threshold);
}

ad::Tensor stop_targets(std::size_t length, Direction direction) {
  ad::Tensor t({length, 1});
  t[direction == Direction::kForward ? length - 1 : 0] = 1.0;
  return t;
}

}  // namespace seqagree::model
