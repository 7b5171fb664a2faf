#include "seqagree/harness/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "seqagree/errors.hpp"

namespace seqagree::harness {

using model::Direction;
using model::DirectionalModel;

bool Topology::operator==(const Topology& other) const { return model == other.model && method == other.method; }

std::string describe(const Topology& t) {
  const auto& m = t.model;
  std::ostringstream ss;
  ss << train::method_name(t.method) << " V=" << m.vocab_size << " D=" << m.feature_dim << " embed=" << m.embed_dim
     << " enc=" << m.encoder_dim << " dec=" << m.decoder_dim << " attn=" << m.attention_dim
     << " filters=" << m.location_filters << " width=" << m.location_width;
  return ss.str();
}

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { out_.append(s); }
  void name(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string name() { return std::string(raw(u32())); }
  // Guards element counts read from the file against the bytes left.
  std::size_t count(std::size_t min_bytes_each) {
    const std::uint64_t n = u64();
    if (min_bytes_each > 0 && n > (in_.size() - pos_) / min_bytes_each) throw FormatError("checkpoint: bad count");
    return static_cast<std::size_t>(n);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::array<std::size_t, 8> extents(const model::ModelConfig& m) {
  return {m.vocab_size,    m.feature_dim,   m.embed_dim,        m.encoder_dim,
          m.decoder_dim,   m.attention_dim, m.location_filters, m.location_width};
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.u8(kCheckpointVersion);
  w.raw(kCheckpointMagic);
  w.u8(static_cast<std::uint8_t>(c.topology.method));
  for (std::size_t e : extents(c.topology.model)) w.u64(e);
  w.u64(c.step);
  w.u64(c.counters.size());
  for (const auto& [name, value] : c.counters) {
    w.name(name);
    w.u64(value);
  }
  w.u64(c.tensors.size());
  for (const auto& t : c.tensors) {
    if (ad::shape_size(t.shape) != t.values.size()) {
      throw ShapeError("checkpoint tensor " + t.name + ": shape " + ad::shape_string(t.shape) + " holds " +
                       std::to_string(t.values.size()) + " values");
    }
    w.name(t.name);
    w.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::size_t e : t.shape) w.u64(e);
  }
  for (const auto& t : c.tensors) {
    for (double v : t.values) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  Checkpoint c;
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  const auto method = r.u8();
  if (method > static_cast<std::uint8_t>(train::Method::kDecoderReg)) {
    throw FormatError("checkpoint: unknown method " + std::to_string(method));
  }
  c.topology.method = static_cast<train::Method>(method);
  auto& m = c.topology.model;
  for (std::size_t* e : {&m.vocab_size, &m.feature_dim, &m.embed_dim, &m.encoder_dim, &m.decoder_dim,
                         &m.attention_dim, &m.location_filters, &m.location_width}) {
    *e = r.u64();
  }
  c.step = r.u64();
  const std::size_t n_counters = r.count(12);
  for (std::size_t i = 0; i < n_counters; ++i) {
    auto name = r.name();
    const auto value = r.u64();
    if (!c.counters.emplace(std::move(name), value).second) throw FormatError("checkpoint: repeated counter");
  }
  const std::size_t n_tensors = r.count(5);
  c.tensors.resize(n_tensors);
  for (auto& t : c.tensors) {
    t.name = r.name();
    const auto rank = r.u8();
    for (std::uint8_t i = 0; i < rank; ++i) t.shape.push_back(r.u64());
  }
  for (auto& t : c.tensors) {
    std::size_t n = 1;
    for (std::size_t e : t.shape) {
      if (e != 0 && n > bytes.size() / e) throw FormatError("checkpoint: tensor " + t.name + " too large");
      n *= e;
    }
    if (n > bytes.size() / 8) throw FormatError("checkpoint: tensor " + t.name + " too large");
    t.values.resize(n);
    for (double& v : t.values) v = r.f64();
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint64_t kReverseSeedOffset = 0x9e3779b97f4a7c15ULL;

struct Bundle {
  std::vector<std::pair<std::string, std::vector<ad::Parameter*>>> groups;  // prefix, params
  std::vector<std::pair<std::string, train::Learner*>> learners;            // prefix, learner
};

template <typename State>
Bundle bundle_of(State& s) {
  Bundle b;
  if constexpr (std::is_same_v<std::remove_const_t<State>, BaselineState>) {
    auto& st = const_cast<BaselineState&>(s);
    b.groups.push_back({"", st.model.parameters()});
    b.learners.push_back({"", &st.learner});
  } else if constexpr (std::is_same_v<std::remove_const_t<State>, ModelRegState>) {
    auto& st = const_cast<ModelRegState&>(s);
    b.groups.push_back({"l2r.", st.l2r.parameters()});
    b.groups.push_back({"r2l.", st.r2l.parameters()});
    b.learners.push_back({"l2r.", &st.learners.l2r});
    b.learners.push_back({"r2l.", &st.learners.r2l});
  } else {
    auto& st = const_cast<DecoderRegState&>(s);
    b.groups.push_back({"", st.model.parameters()});
    b.learners.push_back({"", &st.learner});
  }
  return b;
}

Bundle bundle(const RunState& s) {
  return std::visit([](auto& st) { return bundle_of(st); }, s);
}

NamedTensor named(std::string name, const ad::Tensor& t) {
  return {std::move(name), t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
}


}  // namespace

RunState init_state(const model::ModelConfig& model, const train::TrainConfig& train) {
  const auto seed = train.seed;
  switch (train.method) {
    case train::Method::kBaseline:
      return BaselineState{DirectionalModel::create(model, Direction::kForward, seed),
                           train::Learner::seeded(seed, train::kPrimaryStream)};
    case train::Method::kModelReg:
      return ModelRegState{DirectionalModel::create(model, Direction::kForward, seed),
                           DirectionalModel::create(model, Direction::kBackward, seed + kReverseSeedOffset),
                           train::ModelRegLearners::seeded(seed)};
    case train::Method::kDecoderReg:
      return DecoderRegState{model::BiDecoderModel::create(model, seed),
                             train::Learner::seeded(seed, train::kPrimaryStream)};
  }
  throw std::invalid_argument("init_state: unknown method");
}

Topology topology_of(const RunState& s) {
  return std::visit(
      [](const auto& st) -> Topology {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, BaselineState>) return {st.model.config(), train::Method::kBaseline};
        if constexpr (std::is_same_v<S, ModelRegState>) return {st.l2r.config(), train::Method::kModelReg};
        if constexpr (std::is_same_v<S, DecoderRegState>) return {st.model.config(), train::Method::kDecoderReg};
      },
      s);
}

std::uint64_t total_updates(const RunState& s) {
  std::uint64_t total = 0;
  for (const auto& [prefix, l] : bundle(s).learners) total += l->updates;
  return total;
}

Checkpoint make_checkpoint(const RunState& s) {
  Checkpoint c;
  c.topology = topology_of(s);
  c.step = total_updates(s);
  const Bundle b = bundle(s);
  for (const auto& [prefix, l] : b.learners) c.counters[prefix + "updates"] = l->updates;
  for (const auto& [prefix, params] : b.groups) {
    for (const auto* p : params) c.tensors.push_back(named(prefix + p->name(), p->tensor()));
  }
  for (std::size_t gi = 0; gi < b.groups.size(); ++gi) {
    const auto& [prefix, params] = b.groups[gi];
    const auto& moments = b.learners[b.learners.size() == 1 ? 0 : gi].second->adam.moments();
    for (const auto* p : params) {
      const auto it = moments.find(p->name());
      if (it == moments.end()) continue;
      const std::string name = prefix + p->name();
      c.tensors.push_back(named(name + "#m", it->second.m));
      c.tensors.push_back(named(name + "#v", it->second.v));
      c.counters[name + "#t"] = it->second.t;
    }
  }
  return c;
}

RunState restore_state(const Checkpoint& c) {
  train::TrainConfig cfg;
  cfg.method = c.topology.method;
  c.topology.model.validate();
  RunState s = init_state(c.topology.model, cfg);
  const Bundle b = bundle(s);
  std::set<std::string> used;
  auto take = [&](const std::string& name, const ad::Shape& shape) -> const NamedTensor& {
    const NamedTensor* t = c.find(name);
    if (t == nullptr) throw TopologyError("checkpoint has no tensor " + name);
    if (t->shape != shape) {
      throw TopologyError("checkpoint tensor " + name + " is " + ad::shape_string(t->shape) + ", model expects " +
                          ad::shape_string(shape));
    }
    used.insert(name);
    return *t;
  };
  auto counter = [&](const std::string& name) {
    const auto it = c.counters.find(name);
    if (it == c.counters.end()) throw TopologyError("checkpoint has no counter " + name);
    return it->second;
  };

  for (std::size_t gi = 0; gi < b.groups.size(); ++gi) {
    const auto& [prefix, params] = b.groups[gi];
    train::Learner& learner = *b.learners[b.learners.size() == 1 ? 0 : gi].second;
    for (auto* p : params) {
      const std::string name = prefix + p->name();
      const auto& t = take(name, p->tensor().shape());
      std::copy(t.values.begin(), t.values.end(), p->tensor().values().begin());
      if (c.find(name + "#m") == nullptr) continue;
      train::AdamMoments mom;
      const auto& m = take(name + "#m", p->tensor().shape());
      const auto& v = take(name + "#v", p->tensor().shape());
      mom.m = ad::Tensor(m.shape, m.values);
      mom.v = ad::Tensor(v.shape, v.values);
      mom.t = counter(name + "#t");
      learner.adam.moments()[p->name()] = std::move(mom);
    }
  }
  for (const auto& [prefix, l] : b.learners) l->updates = counter(prefix + "updates");
  for (const auto& t : c.tensors) {
    if (!used.count(t.name)) throw TopologyError("checkpoint tensor " + t.name + " does not belong to the model");
  }
  return s;
}

RunState restore_state(const Checkpoint& c, const Topology& expected) {
  if (!(c.topology == expected)) {
    throw TopologyError("checkpoint topology (" + describe(c.topology) + ") differs from expected (" +
                        describe(expected) + ")");
  }
  return restore_state(c);
}

std::vector<const ad::Parameter*> inference_parameters(const RunState& s) {
  return std::visit(
      [](const auto& st) -> std::vector<const ad::Parameter*> {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, BaselineState>) return st.model.parameters();
        if constexpr (std::is_same_v<S, ModelRegState>) return st.l2r.parameters();
        if constexpr (std::is_same_v<S, DecoderRegState>) {
          std::vector<const ad::Parameter*> out;
          auto& m = const_cast<model::BiDecoderModel&>(st.model);
          for (auto* p : m.encoder_parameters()) out.push_back(p);
          for (auto* p : m.decoder_parameters(Direction::kForward)) out.push_back(p);
          return out;
        }
      },
      s);
}

std::vector<const ad::Parameter*> training_only_parameters(const RunState& s) {
  return std::visit(
      [](const auto& st) -> std::vector<const ad::Parameter*> {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, BaselineState>) return {};
        if constexpr (std::is_same_v<S, ModelRegState>) return st.r2l.parameters();
        if constexpr (std::is_same_v<S, DecoderRegState>) {
          std::vector<const ad::Parameter*> out;
          for (auto* p : const_cast<model::BiDecoderModel&>(st.model).decoder_parameters(Direction::kBackward)) {
            out.push_back(p);
          }
          return out;
        }
      },
      s);
}

}  // namespace seqagree::harness
