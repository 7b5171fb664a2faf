#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seqagree/autodiff/graph.hpp"

namespace seqagree::ad {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so that two near-zero
  // gradients compare by absolute difference.
  double relative_floor = 1e-6;
};

struct GradCheckEntry {
  std::string name;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Builds a scalar loss inside the given graph from the current parameter values.
using LossBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of `build` against central differences
/// for every entry of every tensor in `params`. Throws NonDeterministicError
/// if two evaluations at the same point disagree.
GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor* const> params,
                           std::span<const std::string> names, const GradCheckOptions& options = {});

GradCheckReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace seqagree::ad
