#include "seqagree/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "seqagree/errors.hpp"

namespace seqagree::data {

void TaskSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("task.vocab_size", "must be at least 2");
  if (feature_dim < 1) throw ConfigError("task.feature_dim", "must be at least 1");
  if (min_segment < 2) throw ConfigError("task.min_segment", "must be at least 2");
  if (max_segment < min_segment) throw ConfigError("task.max_segment", "must be >= task.min_segment");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("task.noise_std", "must be >= 0");
  if (!(min_prototype_distance >= 0.0)) throw ConfigError("task.min_prototype_distance", "must be >= 0");
}

double prototype_distance(const FeatureSequence& a, const FeatureSequence& b) {
  const std::size_t n = std::min(a.length(), b.length());
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t d = 0; d < a.dim(); ++d) total += std::abs(a.at(t, d) - b.at(t, d));
  }
  return total / static_cast<double>(n * a.dim());
}

Task Task::build(const TaskSpec& spec) {
  spec.validate();
  constexpr int kMaxDraws = 100;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> length_dist(spec.min_segment, spec.max_segment);
  std::uniform_real_distribution<double> value_dist(-1.0, 1.0);

  std::vector<std::size_t> lengths(spec.vocab_size);
  for (auto& l : lengths) l = length_dist(rng);

  Task task;
  task.spec_ = spec;
  for (std::size_t v = 0; v < spec.vocab_size; ++v) {
    bool accepted = false;
    for (int draw = 0; draw < kMaxDraws && !accepted; ++draw) {
      FeatureSequence candidate(lengths[v], spec.feature_dim);
      for (double& x : candidate.values()) x = value_dist(rng);
      accepted = std::all_of(task.prototypes_.begin(), task.prototypes_.end(), [&](const FeatureSequence& p) {
        return prototype_distance(p, candidate) >= spec.min_prototype_distance;
      });
      if (accepted) task.prototypes_.push_back(std::move(candidate));
    }
    if (!accepted) {
      throw std::runtime_error("build_task: prototype " + std::to_string(v) + " still closer than " +
                               format_real(spec.min_prototype_distance) + " to another after " +
                               std::to_string(kMaxDraws) + " draws");
    }
  }
  return task;
}

const FeatureSequence& Task::prototype(int symbol) const {
  if (symbol < 0 || static_cast<std::size_t>(symbol) >= prototypes_.size()) {
    throw VocabularyError("task: symbol " + std::to_string(symbol) + " outside vocabulary");
  }
  return prototypes_[static_cast<std::size_t>(symbol)];
}

std::vector<std::size_t> Task::segment_starts(const SymbolSequence& x) const {
  std::vector<std::size_t> starts;
  std::size_t next = 0;
  for (int s : x.tokens) {
    starts.push_back(next);
    next += segment_length(s) - 1;
  }
  return starts;
}

std::size_t Task::rendered_length(const SymbolSequence& x) const {
  if (x.tokens.empty()) return 0;
  std::size_t total = 0;
  for (int s : x.tokens) total += segment_length(s);
  return total - (x.size() - 1);
}

FeatureSequence oracle_render(const Task& task, const SymbolSequence& x) {
  const std::size_t dim = task.spec().feature_dim;
  FeatureSequence out(task.rendered_length(x), dim);
  const auto starts = task.segment_starts(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const FeatureSequence& p = task.prototype(x.tokens[i]);
    for (std::size_t t = 0; t < p.length(); ++t) {
      auto dst = out.row(starts[i] + t);
      auto src = p.row(t);
      const bool shared = i > 0 && t == 0;
      for (std::size_t d = 0; d < dim; ++d) dst[d] = shared ? 0.5 * (dst[d] + src[d]) : src[d];
    }
  }
  return out;
}

std::size_t DatasetSplit::max_target_length() const {
  std::size_t m = 0;
  for (const auto& u : items) m = std::max(m, u.y.length());
  return m;
}

DatasetSplit gen_split(const Task& task, std::string_view name, std::size_t count, LengthRange lengths,
                       std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_split: count must be at least 1");
  if (lengths.min < 1 || lengths.max < lengths.min) throw std::invalid_argument("gen_split: bad length range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length_dist(lengths.min, lengths.max);
  std::uniform_int_distribution<int> token_dist(0, static_cast<int>(task.vocab_size()) - 1);
  std::seed_seq noise_seed{seed, std::uint64_t{0x6e6f697365}};
  std::mt19937_64 noise_rng(noise_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = name == kTrainSplit && task.spec().noise_std > 0.0;

  DatasetSplit split;
  split.name = std::string(name);
  split.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Utterance u;
    u.x.tokens.resize(length_dist(rng));
    for (int& t : u.x.tokens) t = token_dist(rng);
    u.y = oracle_render(task, u.x);
    if (noisy) {
      for (double& v : u.y.values()) v += task.spec().noise_std * noise(noise_rng);
    }
    split.items.push_back(std::move(u));
  }
  return split;
}

namespace {

// Linear resampling of a prototype to `length` frames.
FeatureSequence resample(const FeatureSequence& p, std::size_t length) {
  if (p.length() == length) return p;
  FeatureSequence out(length, p.dim());
  for (std::size_t t = 0; t < length; ++t) {
    const double u = static_cast<double>(t) * static_cast<double>(p.length() - 1) / static_cast<double>(length - 1);
    const auto lo = static_cast<std::size_t>(std::floor(u));
    const std::size_t hi = std::min(lo + 1, p.length() - 1);
    const double w = u - static_cast<double>(lo);
    for (std::size_t d = 0; d < p.dim(); ++d) out.at(t, d) = (1.0 - w) * p.at(lo, d) + w * p.at(hi, d);
  }
  return out;
}

}  // namespace

Recovery symbol_recovery(const Task& task, const FeatureSequence& predicted, const SymbolSequence& truth) {
  if (predicted.empty()) throw std::invalid_argument("symbol_recovery: empty prediction");
  const std::size_t dim = task.spec().feature_dim;
  if (predicted.dim() != dim) throw ShapeError("symbol_recovery: prediction dim does not match task");
  const auto starts = task.segment_starts(truth);
  const int vocab = static_cast<int>(task.vocab_size());

  Recovery r;
  r.tokens.assign(truth.size(), -1);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t len = task.segment_length(truth.tokens[i]);
    if (starts[i] + len > predicted.length()) continue;
    const bool has_left = i > 0;
    const bool has_right = i + 1 < truth.size();
    double best = 0.0;
    for (int k = 0; k < vocab; ++k) {
      FeatureSequence expected = resample(task.prototype(k), len);
      if (has_left) {
        const auto& left = task.prototype(truth.tokens[i - 1]);
        for (std::size_t d = 0; d < dim; ++d) expected.at(0, d) = 0.5 * (left.at(left.length() - 1, d) + expected.at(0, d));
      }
      if (has_right) {
        const auto& right = task.prototype(truth.tokens[i + 1]);
        for (std::size_t d = 0; d < dim; ++d) expected.at(len - 1, d) = 0.5 * (expected.at(len - 1, d) + right.at(0, d));
      }
      double dist = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = predicted.at(starts[i] + t, d) - expected.at(t, d);
          dist += diff * diff;
        }
      }
      if (k == 0 || dist < best) {
        best = dist;
        r.tokens[i] = k;
      }
    }
    if (r.tokens[i] == truth.tokens[i]) ++r.correct;
  }
  r.all_correct = r.correct == truth.size();
  return r;
}

}  // namespace seqagree::data
