#include "seqagree/train/trainer.hpp"

#include <cmath>
#include <utility>

#include "seqagree/errors.hpp"

namespace seqagree::train {

using model::Direction;

Learner Learner::seeded(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream, std::uint64_t{0x62617463}};
  Learner l;
  l.batch_rng.seed(seq);
  return l;
}

ModelRegLearners ModelRegLearners::seeded(std::uint64_t seed) {
  return {Learner::seeded(seed, kPrimaryStream), Learner::seeded(seed, kReverseStream)};
}

namespace {

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.standard_forward += b.standard_forward;
  a.standard_backward += b.standard_backward;
  a.regularization += b.regularization;
  a.total += b.total;
  return a;
}

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.standard_forward) && std::isfinite(l.standard_backward) &&
         std::isfinite(l.regularization) && std::isfinite(l.total);
}

std::vector<ad::Parameter*> concat(std::vector<ad::Parameter*> a, const std::vector<ad::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

void train_steps(Learner& learner, std::span<ad::Parameter* const> trainable,
                 std::span<ad::Parameter* const> frozen, const data::DatasetSplit& data, const TrainConfig& cfg,
                 const UtteranceObjective& objective, std::size_t n_steps, const std::string& phase,
                 TrainingLog& log, const TrainHooks& hooks) {
  if (n_steps > 0 && data.items.empty()) throw std::invalid_argument("train_steps: empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, data.items.empty() ? 0 : data.items.size() - 1);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (std::size_t s = 0; s < n_steps; ++s) {
    StepRecord rec;
    rec.phase = phase;
    rec.step = learner.updates;
    rec.learning_rate = cfg.learning_rate_at(learner.updates);
    const auto diverged = [&](const std::string& what) {
      zero_grads(trainable);
      return DivergenceError(phase + ": " + what, learner.updates);
    };
    try {
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& u = data.items[pick(learner.batch_rng)];
        ad::Graph g;
        Objective obj = objective(g, u);
        if (!finite(obj.parts)) throw diverged("non-finite loss");
        g.backward(scale(obj.total, inv_batch));
        rec.loss += obj.parts;
      }
    } catch (const NonFiniteError& e) {
      throw diverged(e.what());
    }
    verify_frozen(frozen);
    rec.loss.standard_forward *= inv_batch;
    rec.loss.standard_backward *= inv_batch;
    rec.loss.regularization *= inv_batch;
    rec.loss.total *= inv_batch;
    rec.grad_norm = clip_grad_norm(trainable, cfg.clip_norm);
    if (!std::isfinite(rec.grad_norm)) throw diverged("non-finite gradient");
    learner.adam.step(trainable, rec.learning_rate);
    zero_grads(trainable);
    ++learner.updates;
    if (hooks.on_step) hooks.on_step(rec);
    log.steps.push_back(std::move(rec));
  }
  if (hooks.on_phase_end) hooks.on_phase_end(phase);
}

TrainingLog train_baseline(DirectionalModel& m, Learner& learner, const data::DatasetSplit& data,
                           const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  std::seed_seq seq{cfg.seed, std::uint64_t{0x73616d70}};
  std::mt19937_64 sampling_rng(seq);
  model::PassOptions opts;
  opts.sampling_p = cfg.scheduled_sampling_p;
  opts.rng = &sampling_rng;
  const bool forward = m.direction() == Direction::kForward;

  auto objective = [&](ad::Graph& g, const data::Utterance& u) {
    const auto enc = model::encode(model::bind(g, m.encoder, true), u.x);
    const auto pass = model::teacher_forced_pass(model::bind(g, m.decoder, true), enc, u.y, opts);
    Objective obj;
    obj.total = standard_loss(pass, u.y);
    (forward ? obj.parts.standard_forward : obj.parts.standard_backward) = obj.total.value().item();
    obj.parts.total = obj.total.value().item();
    return obj;
  };
  TrainingLog log;
  train_steps(learner, m.parameters(), {}, data, cfg, objective, cfg.resolved_baseline_steps(), "baseline", log,
              hooks);
  return log;
}

TrainingLog joint_train_model_reg(DirectionalModel& l2r, DirectionalModel& r2l, ModelRegLearners& learners,
                                  const data::DatasetSplit& data, const TrainConfig& cfg,
                                  const TrainHooks& hooks) {
  cfg.validate();
  if (l2r.direction() != Direction::kForward || r2l.direction() != Direction::kBackward) {
    throw DirectionError("joint_train_model_reg: expected a forward and a backward model");
  }
  TrainingLog log;
  auto standard = [](DirectionalModel& m) {
    return [&m](ad::Graph& g, const data::Utterance& u) {
      const auto enc = model::encode(model::bind(g, m.encoder, true), u.x);
      const auto pass = model::teacher_forced_pass(model::bind(g, m.decoder, true), enc, u.y);
      Objective obj;
      obj.total = standard_loss(pass, u.y);
      (m.direction() == Direction::kForward ? obj.parts.standard_forward : obj.parts.standard_backward) =
          obj.total.value().item();
      obj.parts.total = obj.total.value().item();
      return obj;
    };
  };
  auto agreement = [&cfg](DirectionalModel& trainee, const DirectionalModel& helper) {
    return [&trainee, &helper, &cfg](ad::Graph& g, const data::Utterance& u) {
      return model_agreement_loss(g, trainee, helper, u.x, u.y, cfg);
    };
  };

  train_steps(learners.l2r, l2r.parameters(), {}, data, cfg, standard(l2r), cfg.pretrain_steps, "pretrain_l2r", log,
              hooks);
  train_steps(learners.r2l, r2l.parameters(), {}, data, cfg, standard(r2l), cfg.pretrain_steps, "pretrain_r2l", log,
              hooks);
  for (std::size_t it = 0; it < cfg.resolved_joint_iterations(); ++it) {
    const std::string tag = "joint" + std::to_string(it + 1);
    train_steps(learners.l2r, l2r.parameters(), r2l.parameters(), data, cfg, agreement(l2r, r2l),
                cfg.steps_per_iteration, tag + "_l2r", log, hooks);
    train_steps(learners.r2l, r2l.parameters(), l2r.parameters(), data, cfg, agreement(r2l, l2r),
                cfg.steps_per_iteration, tag + "_r2l", log, hooks);
  }
  return log;
}

TrainingLog joint_train_decoder_reg(BiDecoderModel& m, Learner& learner, const data::DatasetSplit& data,
                                    const TrainConfig& cfg, const TrainHooks& hooks, bool include_omega) {
  cfg.validate();
  TrainingLog log;
  auto objective = [&m, include_omega](double lambda, Freeze freeze) {
    return [&m, include_omega, lambda, freeze](ad::Graph& g, const data::Utterance& u) {
      return decoder_reg_loss(g, m, u.x, u.y, DecoderRegOptions{lambda, freeze, include_omega});
    };
  };
  const auto encoder = m.encoder_parameters();
  const auto fwd = m.decoder_parameters(Direction::kForward);
  const auto bwd = m.decoder_parameters(Direction::kBackward);

  train_steps(learner, m.parameters(), {}, data, cfg, objective(0.0, Freeze::kNone), cfg.pretrain_steps, "pretrain",
              log, hooks);
  for (std::size_t it = 0; it < cfg.resolved_joint_iterations(); ++it) {
    const std::string tag = "joint" + std::to_string(it + 1);
    train_steps(learner, concat(encoder, fwd), bwd, data, cfg, objective(cfg.lambda, Freeze::kBackward),
                cfg.steps_per_iteration, tag + "_forward", log, hooks);
    train_steps(learner, concat(encoder, bwd), fwd, data, cfg, objective(cfg.lambda, Freeze::kForward),
                cfg.steps_per_iteration, tag + "_backward", log, hooks);
  }
  return log;
}

}  // namespace seqagree::train
