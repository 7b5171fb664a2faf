#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqagree/autodiff/tensor.hpp"

namespace seqagree::model {

struct SymbolSequence {
  std::vector<int> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const SymbolSequence&) const = default;
};

/// Row-major (length x dim) matrix of target or predicted frames.
class FeatureSequence {
 public:
  FeatureSequence() = default;
  FeatureSequence(std::size_t length, std::size_t dim);
  FeatureSequence(std::size_t length, std::size_t dim, std::vector<double> values);

  static FeatureSequence from_tensor(const ad::Tensor& t);
  ad::Tensor to_tensor() const;

  std::size_t length() const { return length_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return length_ == 0; }

  std::span<double> row(std::size_t t) { return {values_.data() + t * dim_, dim_}; }
  std::span<const double> row(std::size_t t) const { return {values_.data() + t * dim_, dim_}; }
  double& at(std::size_t t, std::size_t d) { return values_[t * dim_ + d]; }
  double at(std::size_t t, std::size_t d) const { return values_[t * dim_ + d]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  /// Bitwise comparison of extents and values.
  bool operator==(const FeatureSequence& other) const;

 private:
  std::size_t length_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// Reverses frame order; values are untouched.
FeatureSequence reverse_time(const FeatureSequence& seq);

}  // namespace seqagree::model
