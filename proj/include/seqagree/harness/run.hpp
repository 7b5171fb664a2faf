#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "seqagree/data/synth.hpp"
#include "seqagree/harness/checkpoint.hpp"
#include "seqagree/harness/config.hpp"
#include "seqagree/metrics/metrics.hpp"

namespace seqagree::harness {

inline constexpr std::string_view kCodeVersion = "seqagree 0.1.0";

std::filesystem::path data_dir(const std::filesystem::path& out_dir);
std::filesystem::path split_path(const std::filesystem::path& out_dir, std::string_view split_name);

/// Writes the three split files under `<out_dir>/data` and returns their
/// paths in train, in-domain, out-of-domain order.
std::vector<std::filesystem::path> gen_data(const RunConfig& config, const std::filesystem::path& out_dir);

struct LoadedSplit {
  data::Task task;
  data::DatasetSplit split;
};

/// Reads a split file and rebuilds the task it was rendered from.
LoadedSplit load_dataset(const std::filesystem::path& path);

struct PhaseRecord {
  std::string phase;  // phase that just ended, or "" for periodic records
  metrics::MetricsRecord record;
};

struct TrainResult {
  RunState state;
  train::TrainingLog log;
  std::vector<PhaseRecord> records;
  std::vector<std::filesystem::path> outputs;
};

/// Trains per `config.train.method` on the splits under `<out_dir>/data`.
/// Writes `checkpoints/<phase>.ckpt` at each phase end, periodic
/// `checkpoints/step_<n>.ckpt`, `checkpoints/final.ckpt` and
/// `metrics.jsonl`. In-domain records are appended at phase ends (and every
/// run.metrics_every updates); the final in-domain and out-of-domain records
/// close the file. On divergence `checkpoints/last_good.ckpt` is written
/// before the DivergenceError propagates.
TrainResult train_run(const RunConfig& config, const std::filesystem::path& out_dir);

/// Evaluation appropriate to the state's method: bi-decoder metrics for
/// decoder_reg, paired metrics for model_reg.
metrics::MetricsRecord evaluate_state(const RunState& s, const data::Task& task, const data::DatasetSplit& split,
                                      const metrics::EvalConfig& cfg, const metrics::RecordInfo& info);

struct AccessReport {
  std::uint64_t inference_reads = 0;
  std::uint64_t training_only_reads = 0;
};

/// Parameter reads made by free-run decoding of every utterance in `split`.
AccessReport free_run_access(const RunState& s, const data::DatasetSplit& split, const metrics::EvalConfig& cfg);

/// Teacher-forced alignment matrices (T' x T) for one utterance; the second
/// is empty for baseline states.
struct AlignmentExport {
  ad::Tensor forward;
  std::optional<ad::Tensor> backward;
};
AlignmentExport export_alignment(const RunState& s, const data::Utterance& u);

void write_alignment_csv(const std::filesystem::path& path, const ad::Tensor& a);
ad::Tensor read_alignment_csv(const std::filesystem::path& path);
void write_alignment_pgm(const std::filesystem::path& path, const ad::Tensor& a);

/// Writes a JSON manifest listing the config snapshot and output files.
void write_manifest(const std::filesystem::path& path, std::string_view command, const RunConfig& config,
                    const std::string& started_at, const std::vector<std::filesystem::path>& outputs);
std::string utc_timestamp();

}  // namespace seqagree::harness
