#include "seqagree/train/optimizer.hpp"

#include <cmath>

namespace seqagree::train {

void Adam::step(std::span<ad::Parameter* const> params, double learning_rate) {
  for (ad::Parameter* p : params) {
    auto& state = moments_[p->name()];
    auto values = p->tensor().values();
    const auto grad = p->tensor().grad();
    if (state.m.size() != values.size()) {
      state.m = ad::Tensor(p->tensor().shape());
      state.v = ad::Tensor(p->tensor().shape());
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
    auto m = state.m.values();
    auto v = state.v.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      values[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEpsilon);
    }
  }
}

double global_grad_norm(std::span<ad::Parameter* const> params) {
  double total = 0.0;
  for (const ad::Parameter* p : params) {
    for (double g : p->tensor().grad()) total += g * g;
  }
  return std::sqrt(total);
}

double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (ad::Parameter* p : params) {
      for (double& g : p->tensor().grad()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<ad::Parameter* const> params) {
  for (ad::Parameter* p : params) p->tensor().zero_grad();
}

}  // namespace seqagree::train
