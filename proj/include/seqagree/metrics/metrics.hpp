#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqagree/data/synth.hpp"
#include "seqagree/model/model.hpp"

namespace seqagree::metrics {

struct MetricsRecord {
  std::string split;
  double teacher_forced_mse = 0.0;
  double free_run_mse = 0.0;
  std::vector<double> per_position_mse;
  std::optional<double> alignment_agreement;
  double intelligible_rate = 0.0;
  std::size_t case_count = 0;
  std::string model_tag;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  // Mean hidden-state distance between the two decoders (bi-decoder models).
  std::optional<double> omega;
  // Mean squared difference between the two models' predictions (model pairs).
  std::optional<double> agreement_term;

  bool operator==(const MetricsRecord&) const = default;
};

struct EvalConfig {
  // When false the free run is forced to emit exactly T' frames.
  bool use_stop_token = false;
  double stop_threshold = 0.5;
  // Frame cap relative to T' when the stop token is used.
  double max_length_factor = 2.0;
};

struct RecordInfo {
  std::string model_tag;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// What a model produced for one utterance.
struct UtterancePredictions {
  model::FeatureSequence teacher_forced;
  model::FeatureSequence free_run;
  std::optional<double> alignment_agreement;
  std::optional<double> omega;
  std::optional<double> agreement_term;
};

/// Aggregates per-utterance predictions (one per split item, in order) into
/// a record. Optional fields are set when every utterance provides them.
MetricsRecord summarize(const data::Task& task, const data::DatasetSplit& split,
                        const std::vector<UtterancePredictions>& predictions, const RecordInfo& info);

MetricsRecord eval_model(const model::DirectionalModel& m, const data::Task& task, const data::DatasetSplit& split,
                         const EvalConfig& cfg, const RecordInfo& info);

/// Free-run metrics come from the forward decoder alone; the backward
/// decoder only contributes alignment agreement and omega.
MetricsRecord eval_model(const model::BiDecoderModel& m, const data::Task& task, const data::DatasetSplit& split,
                         const EvalConfig& cfg, const RecordInfo& info);

/// Free-run metrics from `l2r`; `r2l` contributes alignment agreement and
/// the agreement term.
MetricsRecord eval_model_pair(const model::DirectionalModel& l2r, const model::DirectionalModel& r2l,
                              const data::Task& task, const data::DatasetSplit& split, const EvalConfig& cfg,
                              const RecordInfo& info);

double exposure_bias_gap(const MetricsRecord& record);

/// Mean over (t, j) of |A[t, j] - B[t, j]| for two position-indexed
/// alignment matrices.
double alignment_agreement(const model::PassResult& forward, const model::PassResult& backward);
double alignment_agreement(const ad::Tensor& a, const ad::Tensor& b);

struct AgreementReport {
  double mean = 0.0;
  std::vector<double> per_utterance;
};

AgreementReport alignment_report(const model::BiDecoderModel& m, const data::DatasetSplit& split);

/// Squared error of `predicted` against `target` per position, averaged over
/// D. Positions the prediction did not reach are compared against zeros;
/// positions past the target are ignored.
std::vector<double> position_errors(const model::FeatureSequence& predicted, const model::FeatureSequence& target);

// ---------------------------------------------------------------------------

enum class Metric : std::uint8_t {
  kTeacherForcedMse,
  kFreeRunMse,
  kIntelligibleRate,
  kAlignmentAgreement,
  kOmega,
  kAgreementTerm,
  kExposureBiasGap,
};

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);
bool higher_is_better(Metric m);
double metric_value(const MetricsRecord& r, Metric m);

struct SeedDelta {
  std::uint64_t seed = 0;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // a - b
};

struct RunComparison {
  Metric metric = Metric::kFreeRunMse;
  double median_a = 0.0;
  double median_b = 0.0;
  double median_delta = 0.0;
  std::vector<SeedDelta> per_seed;
  std::size_t a_better = 0;
  std::size_t b_better = 0;
  std::size_t ties = 0;
};

double median(std::vector<double> values);

/// Pairs records by seed (the last record per seed wins) and summarises
/// a - b. Throws std::invalid_argument if the seed sets differ.
RunComparison compare_runs(const std::vector<MetricsRecord>& a, const std::vector<MetricsRecord>& b, Metric metric);

// One JSON object per line.
std::string to_json_line(const MetricsRecord& r);
MetricsRecord from_json_line(std::string_view line);
void write_records(std::ostream& out, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_records(std::istream& in);

}  // namespace seqagree::metrics
