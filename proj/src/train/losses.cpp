#include "seqagree/train/losses.hpp"

#include <algorithm>

#include "seqagree/errors.hpp"

namespace seqagree::train {

using ad::Var;
using model::Direction;

ad::Var standard_loss(const PassResult& pass, const FeatureSequence& y) {
  if (pass.length != y.length()) {
    throw ShapeError("standard_loss: pass length " + std::to_string(pass.length) + " vs target length " +
                     std::to_string(y.length()));
  }
  ad::Graph& g = pass.frames.graph();
  const Var target = g.constant(y.to_tensor());
  const Var stops = g.constant(model::stop_targets(y.length(), pass.direction));
  return add(mse(pass.frames, target), bce_with_logits(pass.stop_logits, stops));
}

ad::Var omega(ad::Var states_a, ad::Var states_b) {
  const ad::Shape sa = states_a.shape();
  const ad::Shape sb = states_b.shape();
  if (sa.size() != 2 || sa != sb) {
    throw ShapeError("omega: state matrices " + ad::shape_string(sa) + " and " + ad::shape_string(sb));
  }
  const Var diff = sub(states_a, states_b);
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(sa[0]));
}

double omega(const ad::Tensor& states_a, const ad::Tensor& states_b) {
  if (states_a.rank() != 2 || states_a.shape() != states_b.shape()) {
    throw ShapeError("omega: state matrices " + ad::shape_string(states_a.shape()) + " and " +
                     ad::shape_string(states_b.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < states_a.size(); ++i) {
    const double d = states_a[i] - states_b[i];
    total += d * d;
  }
  return total / static_cast<double>(states_a.rows());
}

namespace {

PassResult helper_pass(ad::Graph& g, const DirectionalModel& helper, const SymbolSequence& x,
                       const FeatureSequence& y, AgreementMode mode) {
  if (mode == AgreementMode::kTeacherForced) return model::teacher_forced_pass(g, helper, x, y);
  return model::free_run_decode(g, helper, x, 2 * y.length(), 0.5);
}

// Truncates two frame matrices to their common leading positions.
std::pair<Var, Var> common_prefix(Var a, Var b) {
  const std::size_t n = std::min(a.shape()[0], b.shape()[0]);
  if (a.shape()[0] != n) a = slice(a, 0, 0, n);
  if (b.shape()[0] != n) b = slice(b, 0, 0, n);
  return {a, b};
}

}  // namespace

Objective model_agreement_loss(ad::Graph& g, DirectionalModel& trainee, const DirectionalModel& helper,
                               const SymbolSequence& x, const FeatureSequence& y, const TrainConfig& cfg) {
  if (trainee.direction() == helper.direction()) {
    throw DirectionError("model_agreement_loss: trainee and helper share direction " +
                         std::string(model::direction_name(trainee.direction())));
  }
  const auto enc = model::encode(model::bind(g, trainee.encoder, true), x);
  const auto pass = model::teacher_forced_pass(model::bind(g, trainee.decoder, true), enc, y);
  const Var standard = standard_loss(pass, y);

  const PassResult other = helper_pass(g, helper, x, y, cfg.agreement_mode);
  const auto [mine, theirs] = common_prefix(pass.frames, other.frames);
  const Var reg = mse(mine, theirs);
  const Var total = add(standard, scale(reg, cfg.lambda));

  Objective out;
  out.total = total;
  const bool forward = trainee.direction() == Direction::kForward;
  (forward ? out.parts.standard_forward : out.parts.standard_backward) = standard.value().item();
  out.parts.regularization = reg.value().item();
  out.parts.total = total.value().item();
  return out;
}

double agreement_term(const DirectionalModel& a, const DirectionalModel& b, const SymbolSequence& x,
                      const FeatureSequence& y, AgreementMode mode) {
  ad::Graph g;
  const PassResult pa = helper_pass(g, a, x, y, mode);
  const PassResult pb = helper_pass(g, b, x, y, mode);
  const auto [fa, fb] = common_prefix(pa.frames, pb.frames);
  return mse(fa, fb).value().item();
}

std::string_view freeze_name(Freeze f) {
  switch (f) {
    case Freeze::kNone: return "none";
    case Freeze::kForward: return "forward";
    case Freeze::kBackward: return "backward";
  }
  return "unknown";
}

Objective decoder_reg_loss(ad::Graph& g, BiDecoderModel& m, const SymbolSequence& x, const FeatureSequence& y,
                           const DecoderRegOptions& options) {
  const auto enc = model::encode(model::bind(g, m.encoder, true), x);
  model::EncoderOutput detached = enc;
  detached.hidden = g.detach(enc.hidden);

  auto run = [&](Direction d, bool frozen) {
    auto& params = m.decoder(d);
    if (frozen) {
      return model::teacher_forced_pass(model::bind(g, std::as_const(params)), detached, y);
    }
    return model::teacher_forced_pass(model::bind(g, params, true), enc, y);
  };
  const PassResult fwd = run(Direction::kForward, options.freeze == Freeze::kForward);
  const PassResult bwd = run(Direction::kBackward, options.freeze == Freeze::kBackward);

  const Var lf = standard_loss(fwd, y);
  const Var lb = standard_loss(bwd, y);
  Var total = add(lf, lb);

  Objective out;
  out.parts.standard_forward = lf.value().item();
  out.parts.standard_backward = lb.value().item();
  if (options.include_omega) {
    const Var reg = omega(fwd.states, bwd.states);
    total = add(total, scale(reg, options.lambda));
    out.parts.regularization = reg.value().item();
  }
  out.total = total;
  out.parts.total = total.value().item();
  return out;
}

void verify_frozen(std::span<ad::Parameter* const> params) {
  for (const ad::Parameter* p : params) {
    const auto grad = p->tensor().grad();
    if (std::any_of(grad.begin(), grad.end(), [](double v) { return v != 0.0; })) {
      throw FrozenGradientError("frozen parameter '" + p->name() + "' received a gradient");
    }
  }
}

}  // namespace seqagree::train
