#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "seqagree/errors.hpp"
#include "seqagree/harness/cli.hpp"
#include "seqagree/harness/run.hpp"

namespace seqagree::harness {
namespace {

namespace fs = std::filesystem;

const char* const kToyConfig = R"(# tiny lab
task.vocab_size = 4
task.feature_dim = 4
task.min_segment = 2
task.max_segment = 3
task.seed = 3

data.train_count = 8
data.in_domain_count = 4
data.ood_count = 3
data.train_min_symbols = 1
data.train_max_symbols = 2
data.ood_min_symbols = 3
data.ood_max_symbols = 4

model.embed_dim = 8
model.encoder_dim = 8
model.decoder_dim = 8
model.attention_dim = 8
model.location_filters = 4
model.location_width = 3

train.pretrain_steps = 4
train.steps_per_iteration = 2
train.batch_size = 2
train.learning_rate = 0.003
)";

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("seqagree_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "seqagree");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// ---------------------------------------------------------------------------

TEST(Config, ParsesDottedKeysAndComments) {
  const auto c = parse_config(kToyConfig + std::string("train.method = decoder_reg  # trailing comment\n"));
  EXPECT_EQ(c.task.vocab_size, 4u);
  EXPECT_EQ(c.model.vocab_size, 4u);
  EXPECT_EQ(c.model.feature_dim, 4u);
  EXPECT_EQ(c.data.ood_lengths.max, 4u);
  EXPECT_EQ(c.train.method, train::Method::kDecoderReg);
  EXPECT_EQ(c.train.learning_rate, 0.003);
  EXPECT_FALSE(c.train.joint_iterations.has_value());
}

TEST(Config, UnknownKeyNamesTheField) {
  try {
    parse_config("train.lamda = 1.0\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "train.lamda");
  }
}

TEST(Config, MalformedValuesAndRepeatsAreRejected) {
  auto field_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(field_of("train.lambda = one\n"), "train.lambda");
  EXPECT_EQ(field_of("train.batch_size = 4\ntrain.batch_size = 8\n"), "train.batch_size");
  EXPECT_EQ(field_of("train.method = beam\n"), "train.method");
  EXPECT_EQ(field_of("eval.use_stop_token = yes\n"), "eval.use_stop_token");
  EXPECT_EQ(field_of("task.vocab_size = 1\n"), "task.vocab_size");
  EXPECT_EQ(field_of("data.ood_min_symbols = 10\n"), "data.ood_min_symbols");
  EXPECT_EQ(field_of("just words\n"), "line 1");
}

TEST(Config, CanonicalTextRoundTrips) {
  auto c = parse_config(kToyConfig);
  c.train.joint_iterations = 3;
  c.train.lambda = 0.1;
  const auto text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
  EXPECT_NE(text.find("train.joint_iterations = 3\n"), std::string::npos);
  EXPECT_EQ(format_config(RunConfig()).find("train.steps ="), std::string::npos);
}

TEST(Config, SplitSeedsDiffer) {
  DataConfig d;
  EXPECT_NE(split_seed(d, data::kTrainSplit), split_seed(d, data::kInDomainSplit));
  EXPECT_NE(split_seed(d, data::kInDomainSplit), split_seed(d, data::kOutOfDomainSplit));
  EXPECT_EQ(split_seed(d, data::kTrainSplit), split_seed(d, data::kTrainSplit));
}

// ---------------------------------------------------------------------------

class CheckpointTest : public ::testing::TestWithParam<train::Method> {
 protected:
  RunState trained_state() {
    auto config = parse_config(kToyConfig);
    config.train.method = GetParam();
    config.train.joint_iterations = 1;
    auto state = init_state(config.model, config.train);
    const auto task = data::Task::build(config.task);
    const auto split = data::gen_split(task, data::kTrainSplit, 6, {1, 2}, 4);
    std::visit(
        [&](auto& st) {
          using S = std::decay_t<decltype(st)>;
          if constexpr (std::is_same_v<S, BaselineState>) {
            train::train_baseline(st.model, st.learner, split, config.train);
          } else if constexpr (std::is_same_v<S, ModelRegState>) {
            train::joint_train_model_reg(st.l2r, st.r2l, st.learners, split, config.train);
          } else {
            train::joint_train_decoder_reg(st.model, st.learner, split, config.train);
          }
        },
        state);
    return state;
  }
};

TEST_P(CheckpointTest, RoundTripIsBitwise) {
  const auto state = trained_state();
  const auto c = make_checkpoint(state);
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes[0], static_cast<char>(kCheckpointVersion));
  const auto decoded = decode_checkpoint(bytes);
  EXPECT_EQ(decoded, c);
  EXPECT_EQ(encode_checkpoint(decoded), bytes);
  const auto restored = restore_state(decoded, topology_of(state));
  EXPECT_EQ(encode_checkpoint(make_checkpoint(restored)), bytes);
  EXPECT_EQ(total_updates(restored), total_updates(state));
}

TEST_P(CheckpointTest, StoresAdamMomentsAndCounters) {
  const auto c = make_checkpoint(trained_state());
  std::size_t moments = 0;
  for (const auto& t : c.tensors) moments += t.name.ends_with("#m");
  EXPECT_GT(moments, 0u);
  for (const auto& t : c.tensors) {
    if (!t.name.ends_with("#m")) continue;
    const auto base = t.name.substr(0, t.name.size() - 2);
    ASSERT_NE(c.find(base), nullptr) << base;
    ASSERT_NE(c.find(base + "#v"), nullptr) << base;
    EXPECT_TRUE(c.counters.count(base + "#t")) << base;
  }
  EXPECT_GT(c.step, 0u);
}

INSTANTIATE_TEST_SUITE_P(Methods, CheckpointTest,
                         ::testing::Values(train::Method::kBaseline, train::Method::kModelReg,
                                           train::Method::kDecoderReg),
                         [](const auto& info) { return std::string(train::method_name(info.param)); });

TEST(Checkpoint, TopologyMismatchIsRejected) {
  const auto config = parse_config(kToyConfig);
  const auto c = make_checkpoint(init_state(config.model, config.train));
  auto wider = c.topology;
  wider.model.decoder_dim = 9;
  EXPECT_THROW(restore_state(c, wider), TopologyError);
  auto other_method = c.topology;
  other_method.method = train::Method::kDecoderReg;
  EXPECT_THROW(restore_state(c, other_method), TopologyError);

  auto lying = c;
  lying.topology.model.decoder_dim = 9;
  EXPECT_THROW(restore_state(lying), TopologyError);
  auto extra = c;
  extra.tensors.push_back({"decoder.extra", {1}, {0.0}});
  EXPECT_THROW(restore_state(extra), TopologyError);
}

TEST(Checkpoint, CorruptBytesAreRejected) {
  const auto config = parse_config(kToyConfig);
  const auto bytes = encode_checkpoint(make_checkpoint(init_state(config.model, config.train)));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), FormatError);
  auto bad_version = bytes;
  bad_version[0] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  EXPECT_THROW(decode_checkpoint(""), FormatError);
}

TEST(Checkpoint, LittleEndianHeader) {
  Checkpoint c;
  c.topology.model.vocab_size = 0x0102;
  c.step = 7;
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(1, 4), "SQAG");
  EXPECT_EQ(bytes[5], 0);  // method
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 0x02);
  EXPECT_EQ(static_cast<unsigned char>(bytes[7]), 0x01);
}

// ---------------------------------------------------------------------------

class CliTest : public ::testing::Test {
 protected:
  // Lines in `extra` replace base lines with the same key.
  fs::path config_path(const std::string& extra = "") {
    auto key_of = [](const std::string& line) { return line.substr(0, line.find('=')); };
    std::set<std::string> overridden;
    std::istringstream extra_lines(extra);
    for (std::string line; std::getline(extra_lines, line);) overridden.insert(key_of(line));
    std::string text;
    std::istringstream base(kToyConfig);
    for (std::string line; std::getline(base, line);) {
      if (!overridden.count(key_of(line))) text += line + "\n";
    }
    const auto p = dir.path() / ("config" + std::to_string(configs++) + ".txt");
    write_text(p, text + extra);
    return p;
  }
  fs::path out(const std::string& name) { return dir.path() / name; }

  TempDir dir;
  int configs = 0;
};

TEST_F(CliTest, GenDataWritesThreeSplitsBitwiseReproducibly) {
  const auto cfg = config_path();
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("a").string()}).code, kExitOk);
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("b").string()}).code, kExitOk);
  for (auto name : {data::kTrainSplit, data::kInDomainSplit, data::kOutOfDomainSplit}) {
    const auto a = read_bytes(split_path(out("a"), name));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, read_bytes(split_path(out("b"), name))) << name;
  }
  EXPECT_EQ(load_dataset(split_path(out("a"), data::kTrainSplit)).split.items.size(), 8u);
  EXPECT_EQ(load_dataset(split_path(out("a"), data::kOutOfDomainSplit)).split.items.size(), 3u);
  EXPECT_TRUE(fs::exists(out("a") / "gen_data_manifest.json"));
}

TEST_F(CliTest, GenDataDefaultSizes) {
  ASSERT_EQ(cli({"gen-data", "--out-dir", out("d").string()}).code, kExitOk);
  EXPECT_EQ(load_dataset(split_path(out("d"), data::kTrainSplit)).split.items.size(), 200u);
  EXPECT_EQ(load_dataset(split_path(out("d"), data::kInDomainSplit)).split.items.size(), 50u);
  EXPECT_EQ(load_dataset(split_path(out("d"), data::kOutOfDomainSplit)).split.items.size(), 100u);
}

TEST_F(CliTest, ValidationErrorsExitTwo) {
  const auto bad = config_path("task.vocab_size = 1\n");
  auto r = cli({"gen-data", "--config", bad.string(), "--out-dir", out("x").string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("task.vocab_size"), std::string::npos);
  EXPECT_EQ(cli({"gen-data"}).code, kExitValidation);
  EXPECT_EQ(cli({"no-such-command"}).code, kExitValidation);
}

TEST_F(CliTest, TrainWithZeroStepsKeepsInitialisation) {
  const auto cfg = config_path("train.steps = 0\n");
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("r").string()}).code, kExitOk);
  const auto r = cli({"train", "--config", cfg.string(), "--out-dir", out("r").string(), "--seed", "5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto config = load_config(cfg);
  auto tc = config.train;
  tc.seed = 5;
  const auto init = make_checkpoint(init_state(config.model, tc));
  auto saved = load_checkpoint(out("r") / "checkpoints" / "final.ckpt");
  EXPECT_EQ(saved.counters.at("seed"), 5u);
  saved.counters.erase("seed");
  EXPECT_EQ(saved, init);
}

TEST_F(CliTest, TrainIsReproducibleAndListsItsOutputs) {
  const auto cfg = config_path("train.method = decoder_reg\ntrain.joint_iterations = 1\nrun.checkpoint_every = 4\n");
  for (const char* run : {"one", "two"}) {
    ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out(run).string()}).code, kExitOk);
    const auto r = cli({"train", "--config", cfg.string(), "--out-dir", out(run).string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
  }
  EXPECT_EQ(read_bytes(out("one") / "checkpoints" / "final.ckpt"), read_bytes(out("two") / "checkpoints" / "final.ckpt"));
  EXPECT_EQ(read_bytes(out("one") / "metrics.jsonl"), read_bytes(out("two") / "metrics.jsonl"));
  for (const char* name : {"pretrain", "joint1_forward", "joint1_backward", "step_4", "final"}) {
    EXPECT_TRUE(fs::exists(out("one") / "checkpoints" / (std::string(name) + ".ckpt"))) << name;
  }
  std::ifstream m(out("one") / "train_manifest.json");
  std::ostringstream ss;
  ss << m.rdbuf();
  const std::string manifest = ss.str();
  EXPECT_NE(manifest.find("train.method = decoder_reg"), std::string::npos);
  std::ifstream metrics_in(out("one") / "metrics.jsonl");
  const auto records = metrics::read_records(metrics_in);
  ASSERT_EQ(records.size(), 5u);  // three phase ends plus final in-domain and out-of-domain
  EXPECT_EQ(records.back().split, "out_of_domain_test");
  EXPECT_TRUE(records.back().omega.has_value());
}

TEST_F(CliTest, EvalIsStableAndForwardOnly) {
  const auto cfg = config_path("train.method = decoder_reg\ntrain.joint_iterations = 1\n");
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("e").string()}).code, kExitOk);
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--out-dir", out("e").string()}).code, kExitOk);
  const auto ckpt = (out("e") / "checkpoints" / "final.ckpt").string();
  const auto split = split_path(out("e"), data::kInDomainSplit).string();
  const auto a = cli({"eval", "--checkpoint", ckpt, "--split", split, "--assert-forward-only"});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_NE(a.err.find("forward-only check passed"), std::string::npos);
  const auto b = cli({"eval", "--checkpoint", ckpt, "--split", split});
  EXPECT_EQ(a.out, b.out);
  const auto record = metrics::from_json_line(a.out.substr(0, a.out.find('\n')));
  EXPECT_EQ(record.model_tag, "decoder_reg");
  EXPECT_EQ(record.case_count, 4u);
}

TEST_F(CliTest, EvalRejectsMismatchedDataset) {
  const auto cfg = config_path("train.steps = 0\n");
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("m").string()}).code, kExitOk);
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--out-dir", out("m").string()}).code, kExitOk);
  const auto other = config_path("task.feature_dim = 5\n");
  ASSERT_EQ(cli({"gen-data", "--config", other.string(), "--out-dir", out("o").string()}).code, kExitOk);
  const auto r = cli({"eval", "--checkpoint", (out("m") / "checkpoints" / "final.ckpt").string(), "--split",
                      split_path(out("o"), data::kInDomainSplit).string()});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_NE(r.err.find("topology"), std::string::npos);
}

TEST_F(CliTest, DivergenceExitsThreeAndKeepsLastGoodCheckpoint) {
  const auto cfg = config_path("train.steps = 20\ntrain.learning_rate = 1e300\ntrain.clip_norm = 0\n");
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("v").string()}).code, kExitOk);
  const auto r = cli({"train", "--config", cfg.string(), "--out-dir", out("v").string()});
  EXPECT_EQ(r.code, kExitDivergence) << r.err;
  const auto last = load_checkpoint(out("v") / "checkpoints" / "last_good.ckpt");
  for (const auto& t : last.tensors) {
    for (double v : t.values) ASSERT_TRUE(std::isfinite(v)) << t.name;
  }
  EXPECT_TRUE(fs::exists(out("v") / "train_manifest.json"));
}

TEST_F(CliTest, CompareSummarisesPairedSeeds) {
  std::vector<metrics::MetricsRecord> a, b;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    metrics::MetricsRecord r;
    r.seed = s;
    r.split = "out_of_domain_test";
    r.free_run_mse = 0.25 * static_cast<double>(s);
    a.push_back(r);
    r.free_run_mse = 0.5;
    b.push_back(r);
  }
  for (auto [name, recs] : {std::pair{"a.jsonl", &a}, std::pair{"b.jsonl", &b}}) {
    std::ofstream f(out(name));
    metrics::write_records(f, *recs);
  }
  const auto json = out("cmp.json");
  const auto r = cli({"compare", out("a.jsonl").string(), out("b.jsonl").string(), "--metric", "free_run_mse",
                      "--split", "out_of_domain_test", "--json", json.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("a better 1 b better 1 ties 1"), std::string::npos) << r.out;
  EXPECT_NE(read_bytes(json).find("\"median_delta\": 0.0"), std::string::npos);

  a.pop_back();
  std::ofstream f(out("a.jsonl"));
  metrics::write_records(f, a);
  f.close();
  EXPECT_EQ(cli({"compare", out("a.jsonl").string(), out("b.jsonl").string()}).code, kExitValidation);
}

TEST_F(CliTest, ExportAlignmentWritesCsvAndPgm) {
  const auto cfg = config_path("train.method = decoder_reg\ntrain.joint_iterations = 1\n");
  ASSERT_EQ(cli({"gen-data", "--config", cfg.string(), "--out-dir", out("x").string()}).code, kExitOk);
  ASSERT_EQ(cli({"train", "--config", cfg.string(), "--out-dir", out("x").string()}).code, kExitOk);
  const auto ckpt = (out("x") / "checkpoints" / "final.ckpt").string();
  const auto split_file = split_path(out("x"), data::kOutOfDomainSplit);
  const auto r = cli({"export-alignment", "--checkpoint", ckpt, "--split", split_file.string(), "--index", "1",
                      "--out-dir", out("align").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto u = load_dataset(split_file).split.items[1];
  for (const char* name : {"forward", "backward"}) {
    const auto a = read_alignment_csv(out("align") / (std::string(name) + ".csv"));
    ASSERT_EQ(a.rows(), u.y.length());
    ASSERT_EQ(a.cols(), u.x.size());
    for (std::size_t t = 0; t < a.rows(); ++t) {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) sum += a.at(t, j);
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
    const auto pgm = read_bytes(out("align") / (std::string(name) + ".pgm"));
    const std::string header = "P5\n" + std::to_string(u.x.size()) + " " + std::to_string(u.y.length()) + "\n255\n";
    ASSERT_EQ(pgm.substr(0, header.size()), header);
    EXPECT_EQ(pgm.size(), header.size() + u.x.size() * u.y.length());
  }
  EXPECT_NE(r.out.find("alignment_agreement"), std::string::npos);

  const auto by_tokens = cli({"export-alignment", "--checkpoint", ckpt, "--split", split_file.string(), "--tokens",
                              "0 3 1", "--out-dir", out("tok").string()});
  ASSERT_EQ(by_tokens.code, kExitOk) << by_tokens.err;
  EXPECT_EQ(read_alignment_csv(out("tok") / "forward.csv").cols(), 3u);

  EXPECT_EQ(cli({"export-alignment", "--checkpoint", ckpt, "--split", split_file.string(), "--index", "99",
                 "--out-dir", out("bad").string()})
                .code,
            kExitFailure);
}

TEST_F(CliTest, ForwardOnlyAccessMatchesBaseline) {
  const auto config = parse_config(kToyConfig);
  auto tc = config.train;
  const auto task = data::Task::build(config.task);
  const auto split = data::gen_split(task, data::kInDomainSplit, 3, {1, 2}, 6);
  tc.method = train::Method::kBaseline;
  const auto base = free_run_access(init_state(config.model, tc), split, config.eval);
  tc.method = train::Method::kDecoderReg;
  const auto bi = free_run_access(init_state(config.model, tc), split, config.eval);
  EXPECT_GT(base.inference_reads, 0u);
  EXPECT_EQ(bi.inference_reads, base.inference_reads);
  EXPECT_EQ(bi.training_only_reads, 0u);
}

}  // namespace
}  // namespace seqagree::harness
