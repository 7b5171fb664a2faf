#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seqagree {

/// Operand extents do not satisfy an op's shape rule.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf entered or was produced inside a graph.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the graph lifecycle (backward before forward, non-scalar loss, ...).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A token id outside [0, vocab_size).
class VocabularyError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class DirectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A gradient reached a parameter that the current phase declares frozen.
class FrozenGradientError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& context, std::size_t step)
      : std::runtime_error(context + ": non-finite loss at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Bad configuration value; `field` is the dotted key path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint topology differs from what the caller expects.
class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an error raised while evaluating one utterance of a split.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::size_t utterance, const std::string& message)
      : std::runtime_error("utterance " + std::to_string(utterance) + ": " + message), utterance_(utterance) {}
  std::size_t utterance() const { return utterance_; }

 private:
  std::size_t utterance_;
};

}  // namespace seqagree
