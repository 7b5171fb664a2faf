#include "seqagree/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "seqagree/errors.hpp"
#include "seqagree/train/losses.hpp"

namespace seqagree::metrics {

using model::Direction;
using model::FeatureSequence;
using model::PassResult;

std::vector<double> position_errors(const FeatureSequence& predicted, const FeatureSequence& target) {
  if (!predicted.empty() && predicted.dim() != target.dim()) {
    throw ShapeError("position_errors: prediction dim " + std::to_string(predicted.dim()) + " vs target dim " +
                     std::to_string(target.dim()));
  }
  std::vector<double> out(target.length(), 0.0);
  for (std::size_t t = 0; t < target.length(); ++t) {
    double total = 0.0;
    for (std::size_t d = 0; d < target.dim(); ++d) {
      const double p = t < predicted.length() ? predicted.at(t, d) : 0.0;
      const double diff = p - target.at(t, d);
      total += diff * diff;
    }
    out[t] = total / static_cast<double>(target.dim());
  }
  return out;
}

double alignment_agreement(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.shape() != b.shape() || a.size() == 0) {
    throw ShapeError("alignment_agreement: " + ad::shape_string(a.shape()) + " vs " + ad::shape_string(b.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

double alignment_agreement(const PassResult& forward, const PassResult& backward) {
  return alignment_agreement(forward.alignments.value(), backward.alignments.value());
}

namespace {

double mean(const std::vector<double>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return v.empty() ? 0.0 : total / static_cast<double>(v.size());
}

double frame_mse(const FeatureSequence& predicted, const FeatureSequence& target) {
  return mean(position_errors(predicted, target));
}

template <typename Fn>
MetricsRecord evaluate(const data::Task& task, const data::DatasetSplit& split, const RecordInfo& info, Fn&& run) {
  if (split.items.empty()) throw std::invalid_argument("eval_model: empty split");
  std::vector<UtterancePredictions> preds;
  preds.reserve(split.items.size());
  for (std::size_t i = 0; i < split.items.size(); ++i) {
    try {
      preds.push_back(run(split.items[i]));
    } catch (const std::exception& ex) {
      throw EvalError(i, ex.what());
    }
  }
  return summarize(task, split, preds, info);
}

std::size_t free_run_cap(const EvalConfig& cfg, std::size_t target_length) {
  if (!cfg.use_stop_token) return target_length;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.max_length_factor *
                                                                     static_cast<double>(target_length))));
}

double free_run_threshold(const EvalConfig& cfg) { return cfg.use_stop_token ? cfg.stop_threshold : 1.0; }

}  // namespace

MetricsRecord summarize(const data::Task& task, const data::DatasetSplit& split,
                        const std::vector<UtterancePredictions>& predictions, const RecordInfo& info) {
  if (split.items.empty()) throw std::invalid_argument("summarize: empty split");
  if (predictions.size() != split.items.size()) {
    throw std::invalid_argument("summarize: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(split.items.size()) + " utterances");
  }
  MetricsRecord r;
  r.split = split.name;
  r.model_tag = info.model_tag;
  r.seed = info.seed;
  r.step = info.step;
  r.case_count = split.items.size();
  std::vector<double> pos_total(split.max_target_length(), 0.0);
  std::vector<std::size_t> pos_count(pos_total.size(), 0);
  std::vector<double> tf, fr, align, om, agree;
  std::size_t intelligible = 0;
  for (std::size_t i = 0; i < split.items.size(); ++i) {
    const auto& u = split.items[i];
    const auto& e = predictions[i];
    try {
      tf.push_back(frame_mse(e.teacher_forced, u.y));
      const auto errs = position_errors(e.free_run, u.y);
      fr.push_back(mean(errs));
      for (std::size_t t = 0; t < errs.size(); ++t) {
        pos_total[t] += errs[t];
        ++pos_count[t];
      }
      if (data::symbol_recovery(task, e.free_run, u.x).all_correct) ++intelligible;
    } catch (const std::exception& ex) {
      throw EvalError(i, ex.what());
    }
    if (e.alignment_agreement) align.push_back(*e.alignment_agreement);
    if (e.omega) om.push_back(*e.omega);
    if (e.agreement_term) agree.push_back(*e.agreement_term);
  }
  const std::size_t n = split.items.size();
  r.teacher_forced_mse = mean(tf);
  r.free_run_mse = mean(fr);
  r.per_position_mse.resize(pos_total.size());
  for (std::size_t t = 0; t < pos_total.size(); ++t) {
    r.per_position_mse[t] = pos_count[t] ? pos_total[t] / static_cast<double>(pos_count[t]) : 0.0;
  }
  r.intelligible_rate = static_cast<double>(intelligible) / static_cast<double>(n);
  if (align.size() == n) r.alignment_agreement = mean(align);
  if (om.size() == n) r.omega = mean(om);
  if (agree.size() == n) r.agreement_term = mean(agree);
  return r;
}

MetricsRecord eval_model(const model::DirectionalModel& m, const data::Task& task, const data::DatasetSplit& split,
                         const EvalConfig& cfg, const RecordInfo& info) {
  return evaluate(task, split, info, [&](const data::Utterance& u) {
    UtterancePredictions e;
    ad::Graph g;
    e.teacher_forced = model::teacher_forced_pass(g, m, u.x, u.y).predicted();
    e.free_run = model::free_run_decode(g, m, u.x, free_run_cap(cfg, u.y.length()), free_run_threshold(cfg))
                     .predicted();
    return e;
  });
}

MetricsRecord eval_model(const model::BiDecoderModel& m, const data::Task& task, const data::DatasetSplit& split,
                         const EvalConfig& cfg, const RecordInfo& info) {
  return evaluate(task, split, info, [&](const data::Utterance& u) {
    UtterancePredictions e;
    ad::Graph g;
    const auto enc = model::encode(model::bind(g, m.encoder), u.x);
    const auto fwd = model::teacher_forced_pass(model::bind(g, m.forward_decoder), enc, u.y);
    const auto bwd = model::teacher_forced_pass(model::bind(g, m.backward_decoder), enc, u.y);
    e.teacher_forced = fwd.predicted();
    e.alignment_agreement = alignment_agreement(fwd, bwd);
    e.omega = train::omega(fwd.states.value(), bwd.states.value());
    e.free_run = model::free_run_decode(g, m, u.x, free_run_cap(cfg, u.y.length()), free_run_threshold(cfg))
                     .predicted();
    return e;
  });
}

MetricsRecord eval_model_pair(const model::DirectionalModel& l2r, const model::DirectionalModel& r2l,
                              const data::Task& task, const data::DatasetSplit& split, const EvalConfig& cfg,
                              const RecordInfo& info) {
  return evaluate(task, split, info, [&](const data::Utterance& u) {
    UtterancePredictions e;
    ad::Graph g;
    const auto fwd = model::teacher_forced_pass(g, l2r, u.x, u.y);
    const auto bwd = model::teacher_forced_pass(g, r2l, u.x, u.y);
    e.teacher_forced = fwd.predicted();
    e.alignment_agreement = alignment_agreement(fwd, bwd);
    e.agreement_term = frame_mse(bwd.predicted(), e.teacher_forced);
    e.free_run = model::free_run_decode(g, l2r, u.x, free_run_cap(cfg, u.y.length()), free_run_threshold(cfg))
                     .predicted();
    return e;
  });
}

double exposure_bias_gap(const MetricsRecord& record) { return record.free_run_mse - record.teacher_forced_mse; }

AgreementReport alignment_report(const model::BiDecoderModel& m, const data::DatasetSplit& split) {
  AgreementReport rep;
  for (const auto& u : split.items) {
    ad::Graph g;
    const auto enc = model::encode(model::bind(g, m.encoder), u.x);
    const auto fwd = model::teacher_forced_pass(model::bind(g, m.forward_decoder), enc, u.y);
    const auto bwd = model::teacher_forced_pass(model::bind(g, m.backward_decoder), enc, u.y);
    rep.per_utterance.push_back(alignment_agreement(fwd, bwd));
  }
  rep.mean = mean(rep.per_utterance);
  return rep;
}

}  // namespace seqagree::metrics
