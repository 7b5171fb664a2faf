#include "seqagree/harness/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "seqagree/errors.hpp"
#include "seqagree/harness/run.hpp"

namespace seqagree::harness {

namespace fs = std::filesystem;

namespace {

class AssertionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  std::string checkpoint;
  std::string split;
  bool assert_forward_only = false;
  std::string metrics_out;

  std::vector<std::string> metrics_files;
  std::string metric = "free_run_mse";
  std::string split_filter;
  std::string json_out;

  std::optional<std::size_t> index;
  std::string tokens;
};

RunConfig config_for(const Options& o) {
  return o.config.empty() ? RunConfig() : load_config(o.config);
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  RunConfig config = config_for(o);
  if (o.seed) config.data.seed = *o.seed;
  config.validate();
  const std::string started = utc_timestamp();
  auto files = gen_data(config, o.out_dir);
  for (const auto& f : files) out << "wrote " << f.string() << '\n';
  write_manifest(fs::path(o.out_dir) / "gen_data_manifest.json", "gen-data", config, started, files);
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  RunConfig config = config_for(o);
  if (o.seed) config.train.seed = *o.seed;
  config.validate();
  const std::string started = utc_timestamp();
  const fs::path manifest = fs::path(o.out_dir) / "train_manifest.json";
  try {
    const auto result = train_run(config, o.out_dir);
    write_manifest(manifest, "train", config, started, result.outputs);
    for (const auto& r : result.records) {
      if (r.phase != "final") continue;
      out << r.record.split << ": free_run_mse " << r.record.free_run_mse << " intelligible_rate "
          << r.record.intelligible_rate << '\n';
    }
  } catch (const DivergenceError&) {
    std::vector<fs::path> kept;
    for (const char* name : {"metrics.jsonl", "checkpoints/last_good.ckpt"}) {
      if (fs::exists(fs::path(o.out_dir) / name)) kept.push_back(fs::path(o.out_dir) / name);
    }
    write_manifest(manifest, "train", config, started, kept);
    throw;
  }
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = config_for(o);
  const auto ckpt = load_checkpoint(o.checkpoint);
  const auto state = restore_state(ckpt);
  const auto dataset = load_dataset(o.split);
  const auto& topo = ckpt.topology.model;
  if (dataset.task.vocab_size() != topo.vocab_size || dataset.task.spec().feature_dim != topo.feature_dim) {
    throw TopologyError("checkpoint (" + describe(ckpt.topology) + ") does not match dataset V=" +
                        std::to_string(dataset.task.vocab_size()) +
                        " D=" + std::to_string(dataset.task.spec().feature_dim));
  }
  const auto seed = ckpt.counters.count("seed") ? ckpt.counters.at("seed") : 0;
  const metrics::RecordInfo info{std::string(train::method_name(ckpt.topology.method)), seed, ckpt.step};
  const auto record = evaluate_state(state, dataset.task, dataset.split, config.eval, info);
  const std::string line = metrics::to_json_line(record);
  if (o.metrics_out.empty()) {
    out << line << '\n';
  } else {
    std::ofstream f(o.metrics_out, std::ios::app);
    if (!f) throw std::runtime_error("cannot write " + o.metrics_out);
    f << line << '\n';
  }
  if (o.assert_forward_only) {
    const auto access = free_run_access(state, dataset.split, config.eval);
    if (access.training_only_reads != 0 || access.inference_reads == 0) {
      throw AssertionFailure("forward-only check failed: " + std::to_string(access.training_only_reads) +
                             " reads of training-only parameters during free run");
    }
    err << "forward-only check passed: " << access.inference_reads << " parameter reads, none outside the "
        << "forward path\n";
  }
  return kExitOk;
}

std::vector<metrics::MetricsRecord> read_filtered(const std::string& path, const std::string& split) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto records = metrics::read_records(in);
  if (split.empty()) return records;
  std::vector<metrics::MetricsRecord> out;
  for (auto& r : records) {
    if (r.split == split) out.push_back(std::move(r));
  }
  return out;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const auto metric = metrics::parse_metric(o.metric);
  const auto a = read_filtered(o.metrics_files.at(0), o.split_filter);
  const auto b = read_filtered(o.metrics_files.at(1), o.split_filter);
  const auto c = metrics::compare_runs(a, b, metric);
  out << "metric " << metrics::metric_name(metric) << (metrics::higher_is_better(metric) ? " (higher" : " (lower")
      << " is better)\n";
  for (const auto& d : c.per_seed) {
    out << "seed " << d.seed << ": a " << d.a << " b " << d.b << " delta " << d.delta << '\n';
  }
  out << "median a " << c.median_a << " median b " << c.median_b << " median delta " << c.median_delta << '\n';
  out << "a better " << c.a_better << " b better " << c.b_better << " ties " << c.ties << '\n';

  nlohmann::ordered_json j;
  j["metric"] = metrics::metric_name(metric);
  j["higher_is_better"] = metrics::higher_is_better(metric);
  j["median_a"] = c.median_a;
  j["median_b"] = c.median_b;
  j["median_delta"] = c.median_delta;
  j["a_better"] = c.a_better;
  j["b_better"] = c.b_better;
  j["ties"] = c.ties;
  auto seeds = nlohmann::ordered_json::array();
  for (const auto& d : c.per_seed) seeds.push_back({{"seed", d.seed}, {"a", d.a}, {"b", d.b}, {"delta", d.delta}});
  j["per_seed"] = seeds;
  if (o.json_out.empty()) {
    out << j.dump() << '\n';
  } else {
    std::ofstream f(o.json_out);
    if (!f) throw std::runtime_error("cannot write " + o.json_out);
    f << j.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_export_alignment(const Options& o, std::ostream& out) {
  const auto state = restore_state(load_checkpoint(o.checkpoint));
  const auto dataset = load_dataset(o.split);
  data::Utterance u;
  if (o.index) {
    if (*o.index >= dataset.split.items.size()) {
      throw std::out_of_range("utterance index " + std::to_string(*o.index) + " outside split of " +
                              std::to_string(dataset.split.items.size()));
    }
    u = dataset.split.items[*o.index];
  } else {
    std::istringstream ss(o.tokens);
    int t;
    while (ss >> t) u.x.tokens.push_back(t);
    if (u.x.tokens.empty()) throw std::invalid_argument("--tokens: no symbols given");
    u.y = data::oracle_render(dataset.task, u.x);
  }
  const auto a = export_alignment(state, u);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  write_alignment_csv(dir / "forward.csv", a.forward);
  write_alignment_pgm(dir / "forward.pgm", a.forward);
  out << "wrote " << (dir / "forward.csv").string() << " (" << a.forward.rows() << "x" << a.forward.cols() << ")\n";
  if (a.backward) {
    write_alignment_csv(dir / "backward.csv", *a.backward);
    write_alignment_pgm(dir / "backward.pgm", *a.backward);
    out << "wrote " << (dir / "backward.csv").string() << '\n';
    out << "alignment_agreement " << metrics::alignment_agreement(a.forward, *a.backward) << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forward-backward decoding regularization lab", "seqagree"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-data", "Generate train / in-domain / out-of-domain splits");
  gen->add_option("--config", o.config, "Config file (defaults apply when omitted)");
  gen->add_option("--out-dir", o.out_dir, "Output directory")->required();
  gen->add_option("--seed", o.seed, "Override data.seed");

  auto* train = app.add_subcommand("train", "Train per train.method on <out-dir>/data");
  train->add_option("--config", o.config, "Config file");
  train->add_option("--out-dir", o.out_dir, "Directory holding data/; receives checkpoints and metrics")->required();
  train->add_option("--seed", o.seed, "Override train.seed");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split file");
  eval->add_option("--checkpoint", o.checkpoint)->required();
  eval->add_option("--split", o.split, "Split file written by gen-data")->required();
  eval->add_option("--config", o.config, "Config file supplying eval.* settings");
  eval->add_option("--out", o.metrics_out, "Append the record here instead of printing it");
  eval->add_flag("--assert-forward-only", o.assert_forward_only,
                 "Fail (exit 4) if free-run decoding reads training-only parameters");

  auto* compare = app.add_subcommand("compare", "Paired per-seed comparison of two metrics files");
  compare->add_option("metrics", o.metrics_files, "Metrics files a and b")->required()->expected(2);
  compare->add_option("--metric", o.metric, "Metric name");
  compare->add_option("--split", o.split_filter, "Only use records of this split");
  compare->add_option("--json", o.json_out, "Write the machine-readable summary here");

  auto* exp = app.add_subcommand("export-alignment", "Write attention alignments as CSV and PGM");
  exp->add_option("--checkpoint", o.checkpoint)->required();
  exp->add_option("--split", o.split, "Split file supplying the task and utterances")->required();
  auto* index = exp->add_option("--index", o.index, "Utterance index in the split");
  auto* tokens = exp->add_option("--tokens", o.tokens, "Space-separated symbol ids");
  index->excludes(tokens);
  exp->add_option("--out-dir", o.out_dir, "Output directory")->required();

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
    if (*exp && !o.index && o.tokens.empty()) throw CLI::ValidationError("export-alignment needs --index or --tokens");
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen_data(o, out);
    if (*train) return cmd_train(o, out);
    if (*eval) return cmd_eval(o, out, err);
    if (*compare) return cmd_compare(o, out);
    if (*exp) return cmd_export_alignment(o, out);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const AssertionFailure& e) {
    err << e.what() << '\n';
    return kExitAssertion;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kExitValidation;
  } catch (const TopologyError& e) {
    err << "topology mismatch: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace seqagree::harness
