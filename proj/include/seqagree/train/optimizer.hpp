#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "seqagree/autodiff/tensor.hpp"

namespace seqagree::train {

struct AdamMoments {
  ad::Tensor m;
  ad::Tensor v;
  std::uint64_t t = 0;

  bool operator==(const AdamMoments&) const = default;
};

/// Adam with per-parameter bias correction. Moments are keyed by parameter
/// name so that a parameter skipped during a phase keeps its state.
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  /// Applies one update to every parameter in `params` using its current
  /// gradient.
  void step(std::span<ad::Parameter* const> params, double learning_rate);

  const std::map<std::string, AdamMoments>& moments() const { return moments_; }
  std::map<std::string, AdamMoments>& moments() { return moments_; }

  bool operator==(const Adam&) const = default;

 private:
  std::map<std::string, AdamMoments> moments_;
};

/// L2 norm of the concatenated gradients.
double global_grad_norm(std::span<ad::Parameter* const> params);

/// Rescales gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm);

void zero_grads(std::span<ad::Parameter* const> params);

}  // namespace seqagree::train
