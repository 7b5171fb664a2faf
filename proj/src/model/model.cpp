#include "seqagree/model/model.hpp"

#include <cmath>

#include "seqagree/errors.hpp"

namespace seqagree::model {

std::string_view direction_name(Direction d) { return d == Direction::kForward ? "forward" : "backward"; }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string("model.") + field, "must be positive");
  };
  if (vocab_size < 2) throw ConfigError("model.vocab_size", "must be at least 2");
  positive(feature_dim, "feature_dim");
  positive(embed_dim, "embed_dim");
  positive(encoder_dim, "encoder_dim");
  positive(decoder_dim, "decoder_dim");
  positive(attention_dim, "attention_dim");
  positive(location_filters, "location_filters");
  if (location_width % 2 == 0) throw ConfigError("model.location_width", "must be odd");
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  ad::Parameter uniform(std::string name, ad::Shape shape, double limit) {
    ad::Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.values()) v = dist(rng_);
    return ad::Parameter(std::move(name), std::move(t));
  }

  ad::Parameter fan_in(std::string name, std::size_t in, std::size_t out) {
    return uniform(std::move(name), {in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  }

  static ad::Parameter zeros(std::string name, ad::Shape shape) {
    return ad::Parameter(std::move(name), ad::Tensor(std::move(shape)));
  }

 private:
  std::mt19937_64 rng_;
};

GruParams make_gru(Initializer& init, const std::string& prefix, std::size_t in, std::size_t dim) {
  return GruParams{
      init.fan_in(prefix + "w_input", in, 3 * dim),
      init.fan_in(prefix + "w_hidden", dim, 3 * dim),
      Initializer::zeros(prefix + "b_input", {1, 3 * dim}),
      Initializer::zeros(prefix + "b_hidden", {1, 3 * dim}),
  };
}

EncoderParams make_encoder(Initializer& init, const ModelConfig& c, const std::string& prefix) {
  EncoderParams p;
  p.embedding = init.uniform(prefix + "embedding", {c.vocab_size, c.embed_dim}, 1.0);
  p.gru = make_gru(init, prefix + "gru.", c.embed_dim, c.encoder_dim);
  return p;
}

DecoderParams make_decoder(Initializer& init, const ModelConfig& c, Direction d, const std::string& prefix) {
  DecoderParams p;
  p.direction = d;
  const std::string a = prefix + "attention.";
  p.attention.query = init.fan_in(a + "query", c.decoder_dim, c.attention_dim);
  p.attention.key = init.fan_in(a + "key", c.encoder_dim, c.attention_dim);
  p.attention.location_filters = init.uniform(a + "location_filters", {c.location_width, 1, c.location_filters},
                                              1.0 / std::sqrt(static_cast<double>(c.location_width)));
  p.attention.location_proj = init.fan_in(a + "location_proj", c.location_filters, c.attention_dim);
  p.attention.bias = Initializer::zeros(a + "bias", {1, c.attention_dim});
  p.attention.score = init.fan_in(a + "score", c.attention_dim, 1);
  p.gru = make_gru(init, prefix + "gru.", c.feature_dim + c.encoder_dim, c.decoder_dim);
  p.frame_w = init.fan_in(prefix + "frame_w", c.decoder_dim, c.feature_dim);
  p.frame_b = Initializer::zeros(prefix + "frame_b", {1, c.feature_dim});
  p.stop_w = init.fan_in(prefix + "stop_w", c.decoder_dim, 1);
  p.stop_b = Initializer::zeros(prefix + "stop_b", {1, 1});
  return p;
}

void collect(GruParams& p, std::vector<ad::Parameter*>& out) {
  out.insert(out.end(), {&p.w_input, &p.w_hidden, &p.b_input, &p.b_hidden});
}

std::vector<const ad::Parameter*> to_const(const std::vector<ad::Parameter*>& params) {
  return {params.begin(), params.end()};
}

}  // namespace

void collect(EncoderParams& p, std::vector<ad::Parameter*>& out) {
  out.push_back(&p.embedding);
  collect(p.gru, out);
}

void collect(DecoderParams& p, std::vector<ad::Parameter*>& out) {
  auto& a = p.attention;
  out.insert(out.end(), {&a.query, &a.key, &a.location_filters, &a.location_proj, &a.bias, &a.score});
  collect(p.gru, out);
  out.insert(out.end(), {&p.frame_w, &p.frame_b, &p.stop_w, &p.stop_b});
}

DirectionalModel DirectionalModel::create(const ModelConfig& config, Direction direction, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  DirectionalModel m;
  m.config_ = config;
  m.encoder = make_encoder(init, config, "encoder.");
  m.decoder = make_decoder(init, config, direction, "decoder.");
  return m;
}

std::vector<ad::Parameter*> DirectionalModel::parameters() {
  std::vector<ad::Parameter*> out;
  collect(encoder, out);
  collect(decoder, out);
  return out;
}

std::vector<const ad::Parameter*> DirectionalModel::parameters() const {
  return to_const(const_cast<DirectionalModel*>(this)->parameters());
}

BiDecoderModel BiDecoderModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer init(seed);
  BiDecoderModel m;
  m.config_ = config;
  m.encoder = make_encoder(init, config, "encoder.");
  m.forward_decoder = make_decoder(init, config, Direction::kForward, "forward.");
  m.backward_decoder = make_decoder(init, config, Direction::kBackward, "backward.");
  return m;
}

std::vector<ad::Parameter*> BiDecoderModel::parameters() {
  std::vector<ad::Parameter*> out;
  collect(encoder, out);
  collect(forward_decoder, out);
  collect(backward_decoder, out);
  return out;
}

std::vector<const ad::Parameter*> BiDecoderModel::parameters() const {
  return to_const(const_cast<BiDecoderModel*>(this)->parameters());
}

std::vector<ad::Parameter*> BiDecoderModel::encoder_parameters() {
  std::vector<ad::Parameter*> out;
  collect(encoder, out);
  return out;
}

std::vector<ad::Parameter*> BiDecoderModel::decoder_parameters(Direction d) {
  std::vector<ad::Parameter*> out;
  collect(decoder(d), out);
  return out;
}

void reset_access_counts(const std::vector<const ad::Parameter*>& params) {
  for (const auto* p : params) p->reset_access_count();
}

std::uint64_t total_access_count(const std::vector<const ad::Parameter*>& params) {
  std::uint64_t total = 0;
  for (const auto* p : params) total += p->access_count();
  return total;
}

// Binding. The non-const overloads honour `trainable`; the const overloads
// always bind read-only.

namespace {

template <typename P>
ad::Var bind_one(ad::Graph& g, P& p, bool trainable) {
  if constexpr (std::is_const_v<P>) {
    return g.parameter(p);
  } else {
    return trainable ? g.parameter(p, true) : g.parameter(static_cast<const ad::Parameter&>(p));
  }
}

template <typename G>
BoundGru bind_gru(ad::Graph& g, G& p, bool trainable) {
  BoundGru b;
  b.w_input = bind_one(g, p.w_input, trainable);
  b.w_hidden = bind_one(g, p.w_hidden, trainable);
  b.b_input = bind_one(g, p.b_input, trainable);
  b.b_hidden = bind_one(g, p.b_hidden, trainable);
  b.dim = p.w_hidden.tensor().rows();
  return b;
}

template <typename E>
BoundEncoder bind_encoder(ad::Graph& g, E& p, bool trainable) {
  BoundEncoder b;
  b.embedding = bind_one(g, p.embedding, trainable);
  b.gru = bind_gru(g, p.gru, trainable);
  b.vocab_size = p.embedding.tensor().rows();
  return b;
}

template <typename D>
BoundDecoder bind_decoder(ad::Graph& g, D& p, bool trainable) {
  BoundDecoder b;
  b.direction = p.direction;
  auto& a = p.attention;
  b.attention.query = bind_one(g, a.query, trainable);
  b.attention.key = bind_one(g, a.key, trainable);
  b.attention.location_filters = bind_one(g, a.location_filters, trainable);
  b.attention.location_proj = bind_one(g, a.location_proj, trainable);
  b.attention.bias = bind_one(g, a.bias, trainable);
  b.attention.score = bind_one(g, a.score, trainable);
  b.gru = bind_gru(g, p.gru, trainable);
  b.frame_w = bind_one(g, p.frame_w, trainable);
  b.frame_b = bind_one(g, p.frame_b, trainable);
  b.stop_w = bind_one(g, p.stop_w, trainable);
  b.stop_b = bind_one(g, p.stop_b, trainable);
  b.state_dim = p.frame_w.tensor().rows();
  b.feature_dim = p.frame_w.tensor().cols();
  return b;
}

}  // namespace

BoundEncoder bind(ad::Graph& g, EncoderParams& p, bool trainable) { return bind_encoder(g, p, trainable); }
BoundEncoder bind(ad::Graph& g, const EncoderParams& p) { return bind_encoder(g, p, false); }
BoundDecoder bind(ad::Graph& g, DecoderParams& p, bool trainable) { return bind_decoder(g, p, trainable); }
BoundDecoder bind(ad::Graph& g, const DecoderParams& p) { return bind_decoder(g, p, false); }

}  // namespace seqagree::model
