#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/container/small_vector.hpp>

namespace seqagree::ad {

using Shape = boost::container::small_vector<std::size_t, 3>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with a gradient buffer of the same length.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  // Rank-1 tensors are viewed as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  // The gradient buffer is allocated (zeroed) on first access.
  std::span<double> grad() {
    ensure_grad();
    return grad_;
  }
  std::span<const double> grad() const {
    ensure_grad();
    return grad_;
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }
  void zero_grad();

  bool all_finite() const;
  bool operator==(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> values_;
  void ensure_grad() const {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  }

  mutable std::vector<double> grad_;
  bool requires_grad_ = false;
};

/// A named trainable tensor. Counts how many graph ops read it, which lets
/// callers prove that a code path never touched a given set of weights.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);

  const std::string& name() const { return name_; }
  Tensor& tensor() { return tensor_; }
  const Tensor& tensor() const { return tensor_; }

  std::uint64_t access_count() const { return accesses_.load(std::memory_order_relaxed); }
  void reset_access_count() const { accesses_.store(0, std::memory_order_relaxed); }
  void note_access() const { accesses_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::string name_;
  Tensor tensor_;
  mutable std::atomic<std::uint64_t> accesses_{0};
};

}  // namespace seqagree::ad
