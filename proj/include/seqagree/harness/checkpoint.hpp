#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "seqagree/model/model.hpp"
#include "seqagree/train/config.hpp"
#include "seqagree/train/trainer.hpp"

namespace seqagree::harness {

inline constexpr std::uint8_t kCheckpointVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "SQAG";

struct Topology {
  model::ModelConfig model;
  train::Method method = train::Method::kBaseline;

  bool operator==(const Topology& other) const;
};

std::string describe(const Topology& t);

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

/// Layout (little-endian): version byte, magic, method byte, eight u64
/// model extents, u64 step, u64 counter count then (u32 length, name, u64)
/// per counter, u64 tensor count then (u32 length, name, u8 rank, u64 per
/// extent) per tensor, then every tensor's values as raw 64-bit doubles in
/// table order.
struct Checkpoint {
  Topology topology;
  std::uint64_t step = 0;
  std::map<std::string, std::uint64_t> counters;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& c);
/// Throws FormatError on truncated or foreign input.
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Trained state per method. Parameter tensors are stored under their model
// names, prefixed `l2r.` / `r2l.` for model_reg; Adam moments follow as
// `<name>#m` and `<name>#v` with the per-parameter step in counter
// `<name>#t`. The batch sampler state is not stored.

struct BaselineState {
  model::DirectionalModel model;
  train::Learner learner;
};

struct ModelRegState {
  model::DirectionalModel l2r;
  model::DirectionalModel r2l;
  train::ModelRegLearners learners;
};

struct DecoderRegState {
  model::BiDecoderModel model;
  train::Learner learner;
};

using RunState = std::variant<BaselineState, ModelRegState, DecoderRegState>;

/// Freshly initialised models and learners for `train.method`.
RunState init_state(const model::ModelConfig& model, const train::TrainConfig& train);

Topology topology_of(const RunState& s);
/// Sum of optimizer updates over the learners of `s`.
std::uint64_t total_updates(const RunState& s);

Checkpoint make_checkpoint(const RunState& s);
/// Throws TopologyError if `c` does not describe exactly the parameters of
/// its topology, or if `expected` is given and differs.
RunState restore_state(const Checkpoint& c);
RunState restore_state(const Checkpoint& c, const Topology& expected);

/// Parameters read by free-run decoding and those that must not be.
std::vector<const ad::Parameter*> inference_parameters(const RunState& s);
std::vector<const ad::Parameter*> training_only_parameters(const RunState& s);

}  // namespace seqagree::harness
