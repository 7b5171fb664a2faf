#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "seqagree/data/synth.hpp"
#include "seqagree/metrics/metrics.hpp"
#include "seqagree/model/model.hpp"
#include "seqagree/train/config.hpp"

namespace seqagree::harness {

struct DataConfig {
  std::size_t train_count = 200;
  std::size_t in_domain_count = 50;
  std::size_t ood_count = 100;
  data::LengthRange train_lengths{3, 10};
  data::LengthRange ood_lengths{15, 30};
  std::uint64_t seed = 1;
};

struct RunOptions {
  // Periodic checkpoint cadence in optimizer updates; 0 keeps only phase-end
  // and final checkpoints.
  std::size_t checkpoint_every = 0;
  // In-domain evaluation cadence in updates; 0 evaluates only at phase ends.
  std::size_t metrics_every = 0;
};

/// Everything a command needs. model.vocab_size and model.feature_dim are
/// taken from the task and are not configurable on their own.
struct RunConfig {
  data::TaskSpec task;
  DataConfig data;
  model::ModelConfig model;
  train::TrainConfig train;
  metrics::EvalConfig eval;
  RunOptions run;

  RunConfig();
  void validate() const;
};

/// Parses `key = value` lines with dotted keys (`train.lambda = 1.0`).
/// `#` starts a comment. Unknown or repeated keys and malformed values
/// raise ConfigError naming the key. The result is validated.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text listing every key; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

/// Seeds for the three splits, derived from data.seed.
std::uint64_t split_seed(const DataConfig& data, std::string_view split_name);

}  // namespace seqagree::harness
