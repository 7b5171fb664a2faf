#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace seqagree::train {

enum class Method : std::uint8_t { kBaseline = 0, kModelReg = 1, kDecoderReg = 2 };
enum class AgreementMode : std::uint8_t { kTeacherForced = 0, kFreeRunPseudo = 1 };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);
std::string_view agreement_mode_name(AgreementMode m);
AgreementMode parse_agreement_mode(std::string_view name);

struct TrainConfig {
  Method method = Method::kBaseline;
  double lambda = 1.0;
  double learning_rate = 1e-3;
  std::size_t decay_after_steps = 1000;
  double decay_factor = 0.9995;
  std::size_t pretrain_steps = 1000;
  // Defaults to 1 for model_reg and 5 for decoder_reg when unset.
  std::optional<std::size_t> joint_iterations;
  std::size_t steps_per_iteration = 500;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double scheduled_sampling_p = 0.0;
  AgreementMode agreement_mode = AgreementMode::kTeacherForced;
  // Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 1.0;
  // Baseline update count. When unset, matches the number of updates the
  // forward decoder receives under decoder_reg with the same schedule.
  std::optional<std::size_t> steps;

  std::size_t resolved_joint_iterations() const;
  std::size_t resolved_baseline_steps() const;
  /// Learning rate for the update with zero-based index `step`.
  double learning_rate_at(std::size_t step) const;

  /// Throws ConfigError naming the offending `train.*` field.
  void validate() const;
};

}  // namespace seqagree::train
