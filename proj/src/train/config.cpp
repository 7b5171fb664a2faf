#include "seqagree/train/config.hpp"

#include <cmath>
#include <string>

#include "seqagree/errors.hpp"

namespace seqagree::train {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kModelReg: return "model_reg";
    case Method::kDecoderReg: return "decoder_reg";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kBaseline, Method::kModelReg, Method::kDecoderReg}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("train.method", "unknown method '" + std::string(name) + "'");
}

std::string_view agreement_mode_name(AgreementMode m) {
  return m == AgreementMode::kTeacherForced ? "teacher_forced" : "free_run_pseudo";
}

AgreementMode parse_agreement_mode(std::string_view name) {
  for (AgreementMode m : {AgreementMode::kTeacherForced, AgreementMode::kFreeRunPseudo}) {
    if (agreement_mode_name(m) == name) return m;
  }
  throw ConfigError("train.agreement_mode", "unknown mode '" + std::string(name) + "'");
}

std::size_t TrainConfig::resolved_joint_iterations() const {
  if (joint_iterations) return *joint_iterations;
  return method == Method::kModelReg ? 1 : 5;
}

std::size_t TrainConfig::resolved_baseline_steps() const {
  if (steps) return *steps;
  TrainConfig as_decoder_reg = *this;
  as_decoder_reg.method = Method::kDecoderReg;
  return pretrain_steps + as_decoder_reg.resolved_joint_iterations() * steps_per_iteration;
}

double TrainConfig::learning_rate_at(std::size_t step) const {
  if (step < decay_after_steps) return learning_rate;
  return learning_rate * std::pow(decay_factor, static_cast<double>(step - decay_after_steps));
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("train.lambda", "must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate", "must be positive");
  }
  if (decay_after_steps == 0) throw ConfigError("train.decay_after_steps", "must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train.decay_factor", "must be in (0, 1]");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(scheduled_sampling_p >= 0.0 && scheduled_sampling_p <= 1.0)) {
    throw ConfigError("train.scheduled_sampling_p", "must be in [0, 1]");
  }
  if (scheduled_sampling_p > 0.0 && method != Method::kBaseline) {
    throw ConfigError("train.scheduled_sampling_p", "only available with method = baseline");
  }
  if (!(clip_norm >= 0.0) || !std::isfinite(clip_norm)) throw ConfigError("train.clip_norm", "must be >= 0");
}

}  // namespace seqagree::train
