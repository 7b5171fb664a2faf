#include "seqagree/harness/run.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seqagree/errors.hpp"

namespace seqagree::harness {

namespace fs = std::filesystem;
using model::Direction;

fs::path data_dir(const fs::path& out_dir) { return out_dir / "data"; }

fs::path split_path(const fs::path& out_dir, std::string_view split_name) {
  return data_dir(out_dir) / (std::string(split_name) + ".txt");
}

std::vector<fs::path> gen_data(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto task = data::Task::build(config.task);
  fs::create_directories(data_dir(out_dir));
  const auto& d = config.data;
  const std::pair<std::string_view, std::pair<std::size_t, data::LengthRange>> plan[] = {
      {data::kTrainSplit, {d.train_count, d.train_lengths}},
      {data::kInDomainSplit, {d.in_domain_count, d.train_lengths}},
      {data::kOutOfDomainSplit, {d.ood_count, d.ood_lengths}},
  };
  std::vector<fs::path> out;
  for (const auto& [name, spec] : plan) {
    const auto split = data::gen_split(task, name, spec.first, spec.second, split_seed(d, name));
    out.push_back(split_path(out_dir, name));
    data::save_split(out.back(), config.task, split);
  }
  return out;
}

LoadedSplit load_dataset(const fs::path& path) {
  auto file = data::load_split(path);
  return {data::Task::build(file.spec), std::move(file.split)};
}

metrics::MetricsRecord evaluate_state(const RunState& s, const data::Task& task, const data::DatasetSplit& split,
                                      const metrics::EvalConfig& cfg, const metrics::RecordInfo& info) {
  return std::visit(
      [&](const auto& st) {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, ModelRegState>) {
          return metrics::eval_model_pair(st.l2r, st.r2l, task, split, cfg, info);
        } else {
          return metrics::eval_model(st.model, task, split, cfg, info);
        }
      },
      s);
}

namespace {

model::PassResult free_run(ad::Graph& g, const RunState& s, const model::SymbolSequence& x, std::size_t max_len,
                           double threshold) {
  return std::visit(
      [&](const auto& st) {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, ModelRegState>) {
          return model::free_run_decode(g, st.l2r, x, max_len, threshold);
        } else {
          return model::free_run_decode(g, st.model, x, max_len, threshold);
        }
      },
      s);
}

void check_feature_dim(const RunState& s, const data::DatasetSplit& split) {
  const auto topo = topology_of(s);
  for (const auto& u : split.items) {
    if (u.y.dim() != topo.model.feature_dim) {
      throw TopologyError("dataset frames have " + std::to_string(u.y.dim()) + " channels, checkpoint expects " +
                          std::to_string(topo.model.feature_dim));
    }
  }
}

}  // namespace

AccessReport free_run_access(const RunState& s, const data::DatasetSplit& split, const metrics::EvalConfig& cfg) {
  check_feature_dim(s, split);
  const auto inference = inference_parameters(s);
  const auto training_only = training_only_parameters(s);
  model::reset_access_counts(inference);
  model::reset_access_counts(training_only);
  for (const auto& u : split.items) {
    ad::Graph g;
    const std::size_t cap =
        cfg.use_stop_token
            ? static_cast<std::size_t>(std::ceil(cfg.max_length_factor * static_cast<double>(u.y.length())))
            : u.y.length();
    free_run(g, s, u.x, std::max<std::size_t>(cap, 1), cfg.use_stop_token ? cfg.stop_threshold : 1.0);
  }
  return {model::total_access_count(inference), model::total_access_count(training_only)};
}

AlignmentExport export_alignment(const RunState& s, const data::Utterance& u) {
  return std::visit(
      [&](const auto& st) {
        using S = std::decay_t<decltype(st)>;
        AlignmentExport out;
        ad::Graph g;
        if constexpr (std::is_same_v<S, BaselineState>) {
          out.forward = model::teacher_forced_pass(g, st.model, u.x, u.y).alignments.value();
        } else if constexpr (std::is_same_v<S, ModelRegState>) {
          out.forward = model::teacher_forced_pass(g, st.l2r, u.x, u.y).alignments.value();
          out.backward = model::teacher_forced_pass(g, st.r2l, u.x, u.y).alignments.value();
        } else {
          const auto enc = model::encode(model::bind(g, st.model.encoder), u.x);
          out.forward = model::teacher_forced_pass(model::bind(g, st.model.forward_decoder), enc, u.y).alignments.value();
          out.backward =
              model::teacher_forced_pass(model::bind(g, st.model.backward_decoder), enc, u.y).alignments.value();
        }
        return out;
      },
      s);
}

void write_alignment_csv(const fs::path& path, const ad::Tensor& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (c) out << ',';
      out << data::format_real(a.at(r, c));
    }
    out << '\n';
  }
}

ad::Tensor read_alignment_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ls, cell, ',')) {
      values.push_back(std::stod(cell));
      ++n;
    }
    if (rows > 0 && n != cols) throw FormatError("alignment csv: ragged row " + std::to_string(rows + 1));
    cols = n;
    ++rows;
  }
  if (rows == 0) throw FormatError("alignment csv: empty");
  return ad::Tensor({rows, cols}, std::move(values));
}

void write_alignment_pgm(const fs::path& path, const ad::Tensor& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << a.cols() << ' ' << a.rows() << "\n255\n";
  for (double v : a.values()) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped))));
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& path, std::string_view command, const RunConfig& config,
                    const std::string& started_at, const std::vector<fs::path>& outputs) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["code_version"] = kCodeVersion;
  j["seed"] = config.train.seed;
  j["started_at"] = started_at;
  j["finished_at"] = utc_timestamp();
  j["config"] = format_config(config);
  auto files = nlohmann::ordered_json::array();
  for (const auto& p : outputs) files.push_back(p.generic_string());
  j["outputs"] = files;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

class RunWriter {
 public:
  RunWriter(const RunConfig& config, const fs::path& out_dir, const data::Task& task,
            const data::DatasetSplit& in_domain, TrainResult& result)
      : config_(config), out_dir_(out_dir), task_(task), in_domain_(in_domain), result_(result) {
    fs::create_directories(out_dir / "checkpoints");
    metrics_path_ = out_dir / "metrics.jsonl";
    metrics_.open(metrics_path_, std::ios::trunc);
    if (!metrics_) throw std::runtime_error("cannot write " + metrics_path_.string());
    result_.outputs.push_back(metrics_path_);
  }

  void checkpoint(const std::string& stem) {
    auto c = make_checkpoint(result_.state);
    c.counters["seed"] = config_.train.seed;
    const fs::path path = out_dir_ / "checkpoints" / (stem + ".ckpt");
    save_checkpoint(path, c);
    if (std::find(result_.outputs.begin(), result_.outputs.end(), path) == result_.outputs.end()) {
      result_.outputs.push_back(path);
    }
  }

  void record(const std::string& phase, const data::DatasetSplit& split) {
    const metrics::RecordInfo info{std::string(train::method_name(config_.train.method)), config_.train.seed,
                                   total_updates(result_.state)};
    auto r = evaluate_state(result_.state, task_, split, config_.eval, info);
    metrics_ << metrics::to_json_line(r) << '\n';
    metrics_.flush();
    result_.records.push_back({phase, std::move(r)});
  }

  train::TrainHooks hooks() {
    train::TrainHooks h;
    h.on_step = [this](const train::StepRecord&) {
      const auto n = total_updates(result_.state);
      if (config_.run.checkpoint_every && n % config_.run.checkpoint_every == 0) {
        checkpoint("step_" + std::to_string(n));
      }
      if (config_.run.metrics_every && n % config_.run.metrics_every == 0) record("", in_domain_);
    };
    h.on_phase_end = [this](const std::string& phase) {
      checkpoint(phase);
      record(phase, in_domain_);
    };
    return h;
  }

 private:
  const RunConfig& config_;
  fs::path out_dir_;
  const data::Task& task_;
  const data::DatasetSplit& in_domain_;
  TrainResult& result_;
  fs::path metrics_path_;
  std::ofstream metrics_;
};

LoadedSplit require_split(const RunConfig& config, const fs::path& out_dir, std::string_view name) {
  const auto path = split_path(out_dir, name);
  if (!fs::exists(path)) throw std::runtime_error("missing dataset " + path.string() + "; run gen-data first");
  auto file = data::load_split(path);
  if (!(file.spec == config.task)) {
    throw ConfigError("task", "dataset " + path.string() + " was generated from a different task");
  }
  return {data::Task::build(file.spec), std::move(file.split)};
}

}  // namespace

TrainResult train_run(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const auto train_split = require_split(config, out_dir, data::kTrainSplit);
  const auto in_domain = require_split(config, out_dir, data::kInDomainSplit);
  const auto ood = require_split(config, out_dir, data::kOutOfDomainSplit);
  const auto& task = train_split.task;

  TrainResult result{init_state(config.model, config.train), {}, {}, {}};
  RunWriter writer(config, out_dir, task, in_domain.split, result);
  const auto hooks = writer.hooks();
  try {
    std::visit(
        [&](auto& st) {
          using S = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<S, BaselineState>) {
            result.log = train::train_baseline(st.model, st.learner, train_split.split, config.train, hooks);
          } else if constexpr (std::is_same_v<S, ModelRegState>) {
            result.log =
                train::joint_train_model_reg(st.l2r, st.r2l, st.learners, train_split.split, config.train, hooks);
          } else {
            result.log = train::joint_train_decoder_reg(st.model, st.learner, train_split.split, config.train, hooks);
          }
        },
        result.state);
  } catch (const DivergenceError&) {
    writer.checkpoint("last_good");
    throw;
  }
  writer.checkpoint("final");
  writer.record("final", in_domain.split);
  writer.record("final", ood.split);
  return result;
}

}  // namespace seqagree::harness
