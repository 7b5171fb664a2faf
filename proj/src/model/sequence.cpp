#include "seqagree/model/sequence.hpp"

#include <cstring>

#include "seqagree/errors.hpp"

namespace seqagree::model {

FeatureSequence::FeatureSequence(std::size_t length, std::size_t dim)
    : length_(length), dim_(dim), values_(length * dim, 0.0) {}

FeatureSequence::FeatureSequence(std::size_t length, std::size_t dim, std::vector<double> values)
    : length_(length), dim_(dim), values_(std::move(values)) {
  if (values_.size() != length_ * dim_) {
    throw ShapeError("feature sequence: " + std::to_string(values_.size()) + " values for " +
                     std::to_string(length_) + "x" + std::to_string(dim_));
  }
}

FeatureSequence FeatureSequence::from_tensor(const ad::Tensor& t) {
  auto v = t.values();
  return FeatureSequence(t.rows(), t.cols(), std::vector<double>(v.begin(), v.end()));
}

ad::Tensor FeatureSequence::to_tensor() const { return ad::Tensor({length_, dim_}, values_); }

bool FeatureSequence::operator==(const FeatureSequence& other) const {
  return length_ == other.length_ && dim_ == other.dim_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0);
}

FeatureSequence reverse_time(const FeatureSequence& seq) {
  FeatureSequence out(seq.length(), seq.dim());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    auto src = seq.row(seq.length() - 1 - t);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace seqagree::model
