#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqagree/data/synth.hpp"
#include "seqagree/train/losses.hpp"
#include "seqagree/train/optimizer.hpp"

namespace seqagree::train {

struct StepRecord {
  std::string phase;
  std::uint64_t step = 0;  // zero-based update index of the optimizer that ran it
  double learning_rate = 0.0;
  double grad_norm = 0.0;  // before clipping
  LossBreakdown loss;      // batch mean

  bool operator==(const StepRecord&) const = default;
};

struct TrainingLog {
  std::vector<StepRecord> steps;

  bool operator==(const TrainingLog&) const = default;
};

/// Optimizer state, update counter and batch sampler of one trained model.
struct Learner {
  Adam adam;
  std::uint64_t updates = 0;
  std::mt19937_64 batch_rng;

  /// Seeds the batch sampler from the run seed and a per-model stream id.
  static Learner seeded(std::uint64_t seed, std::uint64_t stream);
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  // Called after each phase with the phase name.
  std::function<void(const std::string&)> on_phase_end;
};

using UtteranceObjective = std::function<Objective(ad::Graph&, const data::Utterance&)>;

/// Runs `n_steps` Adam updates on `trainable`. Each step samples a batch
/// with replacement, builds one graph per utterance and averages their
/// objectives. Gradients reaching `frozen` raise FrozenGradientError; a
/// non-finite loss or gradient raises DivergenceError and leaves the
/// parameters as they were after the last completed update.
void train_steps(Learner& learner, std::span<ad::Parameter* const> trainable,
                 std::span<ad::Parameter* const> frozen, const data::DatasetSplit& data, const TrainConfig& cfg,
                 const UtteranceObjective& objective, std::size_t n_steps, const std::string& phase,
                 TrainingLog& log, const TrainHooks& hooks = {});

/// Standard loss on a single directional model for cfg.resolved_baseline_steps().
TrainingLog train_baseline(DirectionalModel& m, Learner& learner, const data::DatasetSplit& data,
                           const TrainConfig& cfg, const TrainHooks& hooks = {});

struct ModelRegLearners {
  Learner l2r;
  Learner r2l;

  static ModelRegLearners seeded(std::uint64_t seed);
};

/// Pre-trains both models independently, then alternates agreement training
/// with the other model frozen as a helper.
TrainingLog joint_train_model_reg(DirectionalModel& l2r, DirectionalModel& r2l, ModelRegLearners& learners,
                                  const data::DatasetSplit& data, const TrainConfig& cfg,
                                  const TrainHooks& hooks = {});

/// Pre-trains both decoders with lambda = 0, then alternates: backward frozen
/// while the encoder and forward decoder train, then the reverse.
/// `include_omega = false` drops the regularizer from every graph.
TrainingLog joint_train_decoder_reg(BiDecoderModel& m, Learner& learner, const data::DatasetSplit& data,
                                    const TrainConfig& cfg, const TrainHooks& hooks = {},
                                    bool include_omega = true);

// Stream ids used to seed each learner's batch sampler.
inline constexpr std::uint64_t kPrimaryStream = 0;
inline constexpr std::uint64_t kReverseStream = 1;

}  // namespace seqagree::train
