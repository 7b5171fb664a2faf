#include <gtest/gtest.h>

#include <sstream>

#include "seqagree/errors.hpp"
#include "seqagree/metrics/metrics.hpp"
#include "seqagree/train/trainer.hpp"
#include "toy.hpp"

namespace seqagree::metrics {
namespace {

using model::BiDecoderModel;
using model::Direction;
using model::DirectionalModel;
using model::FeatureSequence;

FeatureSequence offset(const FeatureSequence& y, double c) {
  FeatureSequence out = y;
  for (double& v : out.values()) v += c;
  return out;
}

data::Utterance rendered(const data::Task& task, std::vector<int> tokens) {
  model::SymbolSequence x{std::move(tokens)};
  return {x, data::oracle_render(task, x)};
}

class SummarizeTest : public ::testing::Test {
 protected:
  data::Task task = data::Task::build(testing::toy_task_spec());
  data::DatasetSplit split = data::gen_split(task, data::kInDomainSplit, 6, {1, 3}, 5);
};

TEST_F(SummarizeTest, EchoOfOracleIsPerfect) {
  std::vector<UtterancePredictions> preds;
  for (const auto& u : split.items) preds.push_back({u.y, u.y, {}, {}, {}});
  const auto r = summarize(task, split, preds, {"echo", 4, 10});
  EXPECT_EQ(r.teacher_forced_mse, 0.0);
  EXPECT_EQ(r.free_run_mse, 0.0);
  EXPECT_EQ(r.intelligible_rate, 1.0);
  EXPECT_EQ(r.case_count, 6u);
  EXPECT_EQ(r.split, "in_domain_test");
  EXPECT_EQ(r.model_tag, "echo");
  EXPECT_EQ(r.seed, 4u);
  EXPECT_EQ(r.step, 10u);
  EXPECT_EQ(r.per_position_mse.size(), split.max_target_length());
  for (double e : r.per_position_mse) EXPECT_EQ(e, 0.0);
}

TEST_F(SummarizeTest, PerPositionAveragesOverUtterancesReachingThePosition) {
  data::DatasetSplit s{"in_domain_test", {rendered(task, {0}), rendered(task, {1, 2, 3})}};
  const std::size_t short_len = s.items[0].y.length();
  const std::size_t long_len = s.items[1].y.length();
  ASSERT_LT(short_len, long_len);
  std::vector<UtterancePredictions> preds{
      {s.items[0].y, offset(s.items[0].y, 0.5), {}, {}, {}},
      {s.items[1].y, offset(s.items[1].y, 0.25), {}, {}, {}},
  };
  const auto r = summarize(task, s, preds, {});
  ASSERT_EQ(r.per_position_mse.size(), long_len);
  for (std::size_t t = 0; t < long_len; ++t) {
    const double expected = t < short_len ? 0.5 * (0.25 + 0.0625) : 0.0625;
    EXPECT_NEAR(r.per_position_mse[t], expected, 1e-15) << t;
  }
  EXPECT_NEAR(r.free_run_mse, 0.5 * (0.25 + 0.0625), 1e-15);
  EXPECT_EQ(r.teacher_forced_mse, 0.0);
}

TEST_F(SummarizeTest, ShortFreeRunCountsMissingFramesAgainstZero) {
  data::DatasetSplit s{"x", {rendered(task, {0, 1})}};
  const auto& y = s.items[0].y;
  FeatureSequence cut(1, y.dim(), std::vector<double>(y.row(0).begin(), y.row(0).end()));
  const auto r = summarize(task, s, {{y, cut, {}, {}, {}}}, {});
  double tail = 0.0;
  for (std::size_t t = 1; t < y.length(); ++t) {
    for (double v : y.row(t)) tail += v * v;
  }
  EXPECT_NEAR(r.free_run_mse, tail / static_cast<double>(y.length() * y.dim()), 1e-15);
  EXPECT_EQ(r.intelligible_rate, 0.0);
}

TEST_F(SummarizeTest, OptionalFieldsRequireEveryUtterance) {
  std::vector<UtterancePredictions> preds;
  for (const auto& u : split.items) preds.push_back({u.y, u.y, 0.25, 0.5, 1.0});
  auto r = summarize(task, split, preds, {});
  EXPECT_EQ(r.alignment_agreement, 0.25);
  EXPECT_EQ(r.omega, 0.5);
  EXPECT_EQ(r.agreement_term, 1.0);
  preds[2].omega.reset();
  r = summarize(task, split, preds, {});
  EXPECT_FALSE(r.omega.has_value());
  EXPECT_TRUE(r.alignment_agreement.has_value());
}

TEST_F(SummarizeTest, RejectsMismatchedInputs) {
  std::vector<UtterancePredictions> preds(split.items.size() - 1);
  EXPECT_THROW(summarize(task, split, preds, {}), std::invalid_argument);
  EXPECT_THROW(summarize(task, data::DatasetSplit{"empty", {}}, {}, {}), std::invalid_argument);
}

TEST(ExposureBiasGap, Arithmetic) {
  MetricsRecord r;
  r.teacher_forced_mse = 0.3;
  r.free_run_mse = 0.3;
  EXPECT_EQ(exposure_bias_gap(r), 0.0);
  r.teacher_forced_mse = 0.0;
  r.free_run_mse = 0.2;
  EXPECT_EQ(exposure_bias_gap(r), 0.2);
}

TEST(PositionErrors, MissingFramesAreZeroAndExtraFramesIgnored) {
  FeatureSequence target(3, 2, {1, 1, 2, 2, 3, 3});
  FeatureSequence longer(4, 2, {1, 1, 2, 2, 3, 3, 9, 9});
  EXPECT_EQ(position_errors(longer, target), (std::vector<double>{0, 0, 0}));
  FeatureSequence shorter(1, 2, {0, 1});
  EXPECT_EQ(position_errors(shorter, target), (std::vector<double>{0.5, 4, 9}));
  EXPECT_EQ(position_errors(FeatureSequence(), target), (std::vector<double>{1, 4, 9}));
  EXPECT_THROW(position_errors(FeatureSequence(3, 1), target), ShapeError);
}

TEST(AlignmentAgreement, UniformAgainstOneHot) {
  const ad::Tensor uniform({1, 2}, {0.5, 0.5});
  const ad::Tensor one_hot({1, 2}, {1.0, 0.0});
  EXPECT_EQ(alignment_agreement(uniform, one_hot), 0.5);
  EXPECT_EQ(alignment_agreement(one_hot, uniform), 0.5);
  EXPECT_EQ(alignment_agreement(uniform, uniform), 0.0);
}

TEST(AlignmentAgreement, SymmetricAndZeroOnlyForEqualMatrices) {
  const ad::Tensor a({2, 3}, {0.2, 0.3, 0.5, 0.1, 0.1, 0.8});
  const ad::Tensor b({2, 3}, {0.6, 0.3, 0.1, 0.1, 0.8, 0.1});
  EXPECT_EQ(alignment_agreement(a, b), alignment_agreement(b, a));
  EXPECT_NEAR(alignment_agreement(a, b), (0.4 + 0 + 0.4 + 0 + 0.7 + 0.7) / 6.0, 1e-15);
  EXPECT_GT(alignment_agreement(a, b), 0.0);
  EXPECT_EQ(alignment_agreement(a, a), 0.0);
}

TEST(AlignmentAgreement, ShapeMismatch) {
  EXPECT_THROW(alignment_agreement(ad::Tensor({2, 3}), ad::Tensor({3, 2})), ShapeError);
}

class EvalTest : public ::testing::Test {
 protected:
  data::Task task = data::Task::build(testing::toy_task_spec());
  data::DatasetSplit train_split = testing::toy_split(task, 12, 7);
  data::DatasetSplit test_split = data::gen_split(task, data::kInDomainSplit, 8, {1, 2}, 8);
  model::ModelConfig config = testing::toy_model_config();
};

TEST_F(EvalTest, RepeatedEvaluationIsBitwiseStable) {
  const auto m = DirectionalModel::create(config, Direction::kForward, 2);
  const auto a = eval_model(m, task, test_split, {}, {"baseline", 2, 0});
  const auto b = eval_model(m, task, test_split, {}, {"baseline", 2, 0});
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a.omega.has_value());
  EXPECT_FALSE(a.alignment_agreement.has_value());

  const auto bi = BiDecoderModel::create(config, 2);
  const auto c = eval_model(bi, task, test_split, {}, {});
  EXPECT_EQ(c, eval_model(bi, task, test_split, {}, {}));
  ASSERT_TRUE(c.omega.has_value());
  ASSERT_TRUE(c.alignment_agreement.has_value());
  EXPECT_GE(*c.omega, 0.0);
}

TEST_F(EvalTest, RecordInvariants) {
  const auto bi = BiDecoderModel::create(config, 4);
  const auto r = eval_model(bi, task, test_split, {}, {});
  EXPECT_GE(r.teacher_forced_mse, 0.0);
  EXPECT_GE(r.free_run_mse, 0.0);
  EXPECT_GE(r.intelligible_rate, 0.0);
  EXPECT_LE(r.intelligible_rate, 1.0);
  EXPECT_EQ(r.per_position_mse.size(), test_split.max_target_length());
  const auto report = alignment_report(bi, test_split);
  ASSERT_EQ(report.per_utterance.size(), test_split.items.size());
  for (double v : report.per_utterance) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
  EXPECT_NEAR(report.mean, *r.alignment_agreement, 1e-15);
}

TEST_F(EvalTest, ModelPairReportsAgreementTerm) {
  const auto l2r = DirectionalModel::create(config, Direction::kForward, 1);
  const auto r2l = DirectionalModel::create(config, Direction::kBackward, 2);
  const auto r = eval_model_pair(l2r, r2l, task, test_split, {}, {});
  ASSERT_TRUE(r.agreement_term.has_value());
  EXPECT_GT(*r.agreement_term, 0.0);
  EXPECT_TRUE(r.alignment_agreement.has_value());
  const auto alone = eval_model(l2r, task, test_split, {}, {});
  EXPECT_EQ(r.free_run_mse, alone.free_run_mse);
  EXPECT_EQ(r.teacher_forced_mse, alone.teacher_forced_mse);
}

TEST_F(EvalTest, StopTokenModeCapsLength) {
  const auto m = DirectionalModel::create(config, Direction::kForward, 2);
  EvalConfig cfg;
  cfg.use_stop_token = true;
  cfg.stop_threshold = 0.5;
  const auto r = eval_model(m, task, test_split, cfg, {});
  EXPECT_GE(r.free_run_mse, 0.0);
  EXPECT_EQ(r.per_position_mse.size(), test_split.max_target_length());
}

TEST_F(EvalTest, ErrorsCarryTheUtteranceIndex) {
  const auto m = DirectionalModel::create(config, Direction::kForward, 2);
  auto bad = test_split;
  bad.items[3].x.tokens[0] = 9;
  try {
    eval_model(m, task, bad, {}, {});
    FAIL() << "expected EvalError";
  } catch (const EvalError& e) {
    EXPECT_EQ(e.utterance(), 3u);
  }
  EXPECT_THROW(eval_model(m, task, data::DatasetSplit{"empty", {}}, {}, {}), std::invalid_argument);
}

TEST_F(EvalTest, TrainedModelBeatsUntrainedOnFreeRun) {
  auto m = DirectionalModel::create(config, Direction::kForward, 3);
  const auto before = eval_model(m, task, test_split, {}, {});
  train::TrainConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  cfg.seed = 3;
  auto learner = train::Learner::seeded(cfg.seed, train::kPrimaryStream);
  train::train_baseline(m, learner, train_split, cfg);
  const auto after = eval_model(m, task, test_split, {}, {});
  EXPECT_LT(after.free_run_mse, before.free_run_mse);
}

std::vector<MetricsRecord> records(const std::vector<double>& fr) {
  std::vector<MetricsRecord> out;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    MetricsRecord r;
    r.seed = i + 1;
    r.free_run_mse = fr[i];
    r.intelligible_rate = fr[i];
    out.push_back(r);
  }
  return out;
}

TEST(CompareRuns, IdenticalInputsGiveZeroDeltas) {
  const auto a = records({0.1, 0.2, 0.3});
  const auto c = compare_runs(a, a, Metric::kFreeRunMse);
  EXPECT_EQ(c.ties, 3u);
  EXPECT_EQ(c.a_better, 0u);
  EXPECT_EQ(c.b_better, 0u);
  EXPECT_EQ(c.median_delta, 0.0);
  for (const auto& d : c.per_seed) EXPECT_EQ(d.delta, 0.0);
}

TEST(CompareRuns, KnownMediansAndSignCounts) {
  const auto a = records({0.75, 0.25, 0.5, 1.0, 0.875});
  const auto b = records({0.5, 0.5, 0.5, 0.5, 0.5});
  auto c = compare_runs(a, b, Metric::kFreeRunMse);
  EXPECT_EQ(c.median_a, 0.75);
  EXPECT_EQ(c.median_b, 0.5);
  EXPECT_EQ(c.median_delta, 0.25);
  EXPECT_EQ(c.a_better, 1u);
  EXPECT_EQ(c.b_better, 3u);
  EXPECT_EQ(c.ties, 1u);
  ASSERT_EQ(c.per_seed.size(), 5u);
  EXPECT_EQ(c.per_seed[1].seed, 2u);
  EXPECT_EQ(c.per_seed[1].delta, -0.25);

  c = compare_runs(a, b, Metric::kIntelligibleRate);
  EXPECT_EQ(c.a_better, 3u);
  EXPECT_EQ(c.b_better, 1u);
}

TEST(CompareRuns, LastRecordPerSeedWins) {
  auto a = records({0.5, 0.5});
  auto late = records({0.25});
  a.push_back(late[0]);
  const auto c = compare_runs(a, records({0.5, 0.5}), Metric::kFreeRunMse);
  EXPECT_EQ(c.per_seed[0].a, 0.25);
  EXPECT_EQ(c.a_better, 1u);
}

TEST(CompareRuns, SeedMismatchAndMissingMetric) {
  EXPECT_THROW(compare_runs(records({1, 2}), records({1, 2, 3}), Metric::kFreeRunMse), std::invalid_argument);
  EXPECT_THROW(compare_runs(records({1}), records({1}), Metric::kOmega), std::invalid_argument);
}

TEST(CompareRuns, MedianOfEvenCount) {
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_EQ(median({7}), 7.0);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(MetricNames, RoundTrip) {
  for (auto m : {Metric::kTeacherForcedMse, Metric::kFreeRunMse, Metric::kIntelligibleRate,
                 Metric::kAlignmentAgreement, Metric::kOmega, Metric::kAgreementTerm, Metric::kExposureBiasGap}) {
    EXPECT_EQ(parse_metric(metric_name(m)), m);
  }
  EXPECT_THROW(parse_metric("mos"), std::invalid_argument);
  EXPECT_TRUE(higher_is_better(Metric::kIntelligibleRate));
  EXPECT_FALSE(higher_is_better(Metric::kFreeRunMse));
}

TEST(JsonLines, RoundTripIsExact) {
  MetricsRecord r;
  r.split = "out_of_domain_test";
  r.teacher_forced_mse = 0.1 / 3.0;
  r.free_run_mse = 1.0 / 7.0;
  r.per_position_mse = {0.1, 2e-17, 3.5};
  r.alignment_agreement = 0.123456789012345;
  r.intelligible_rate = 0.98;
  r.case_count = 100;
  r.model_tag = "decoder_reg";
  r.seed = 5;
  r.step = 12000;
  r.omega = 1e-9;
  const auto line = to_json_line(r);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_NE(line.find("\"agreement_term\":null"), std::string::npos);
  EXPECT_EQ(from_json_line(line), r);

  std::stringstream ss;
  MetricsRecord other;
  other.split = "train";
  write_records(ss, {r, other});
  EXPECT_EQ(read_records(ss), (std::vector<MetricsRecord>{r, other}));
}

TEST(JsonLines, MalformedLinesAreRejected) {
  EXPECT_THROW(from_json_line("{not json"), FormatError);
  EXPECT_THROW(from_json_line("{\"split\": 3}"), FormatError);
}

}  // namespace
}  // namespace seqagree::metrics
