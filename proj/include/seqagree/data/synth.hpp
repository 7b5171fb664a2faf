#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "seqagree/model/sequence.hpp"

namespace seqagree::data {

using model::FeatureSequence;
using model::SymbolSequence;

struct TaskSpec {
  std::size_t vocab_size = 12;
  std::size_t feature_dim = 8;
  std::size_t min_segment = 2;
  std::size_t max_segment = 4;
  double noise_std = 0.01;
  double min_prototype_distance = 0.3;
  std::uint64_t seed = 1;

  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

/// Mean absolute difference over the frames two prototypes have in common.
double prototype_distance(const FeatureSequence& a, const FeatureSequence& b);

/// Materialised synthetic task: one prototype trajectory segment per symbol.
class Task {
 public:
  /// Draws segment lengths and prototypes from the spec seed. A prototype is
  /// redrawn while it lies closer than `min_prototype_distance` to an earlier
  /// one; gives up after 100 draws.
  static Task build(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  std::size_t vocab_size() const { return prototypes_.size(); }
  const FeatureSequence& prototype(int symbol) const;
  std::size_t segment_length(int symbol) const { return prototype(symbol).length(); }

  /// First frame of each symbol's segment in a rendering of `x`.
  std::vector<std::size_t> segment_starts(const SymbolSequence& x) const;
  std::size_t rendered_length(const SymbolSequence& x) const;

 private:
  TaskSpec spec_;
  std::vector<FeatureSequence> prototypes_;
};

/// Concatenates prototypes; adjoining segments share one boundary frame that
/// is the average of the two edge frames.
FeatureSequence oracle_render(const Task& task, const SymbolSequence& x);

struct Utterance {
  SymbolSequence x;
  FeatureSequence y;
};

struct LengthRange {
  std::size_t min = 1;
  std::size_t max = 1;
};

inline constexpr std::string_view kTrainSplit = "train";
inline constexpr std::string_view kInDomainSplit = "in_domain_test";
inline constexpr std::string_view kOutOfDomainSplit = "out_of_domain_test";

struct DatasetSplit {
  std::string name;
  std::vector<Utterance> items;

  std::size_t max_target_length() const;
};

/// Lengths and tokens drawn uniformly. Only the train split carries
/// gaussian target noise; test splits are exact oracle renders.
DatasetSplit gen_split(const Task& task, std::string_view name, std::size_t count, LengthRange lengths,
                       std::uint64_t seed);

struct Recovery {
  std::vector<int> tokens;  // -1 where the prediction ran out of frames
  std::size_t correct = 0;
  bool all_correct = false;
};

/// Cuts `predicted` at the segment boundaries implied by `truth` and assigns
/// each segment to the nearest prototype in mean squared distance. Shared
/// boundary frames are compared against the crossfade of the candidate with
/// the true neighbouring segment.
Recovery symbol_recovery(const Task& task, const FeatureSequence& predicted, const SymbolSequence& truth);

// Text serialisation: a header with the task spec, then one line per
// utterance: T tokens... T' values... (row-major, 9 significant digits).

struct SplitFile {
  TaskSpec spec;
  DatasetSplit split;
};

inline constexpr int kDatasetFormatVersion = 1;

void write_split(std::ostream& out, const TaskSpec& spec, const DatasetSplit& split);
SplitFile read_split(std::istream& in);
void save_split(const std::filesystem::path& path, const TaskSpec& spec, const DatasetSplit& split);
SplitFile load_split(const std::filesystem::path& path);

std::string format_real(double value, int significant_digits = 9);

}  // namespace seqagree::data
