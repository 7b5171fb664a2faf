#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "seqagree/autodiff/graph.hpp"
#include "seqagree/model/model.hpp"
#include "seqagree/train/config.hpp"

namespace seqagree::train {

using model::BiDecoderModel;
using model::DirectionalModel;
using model::FeatureSequence;
using model::PassResult;
using model::SymbolSequence;

struct LossBreakdown {
  double standard_forward = 0.0;
  double standard_backward = 0.0;
  double regularization = 0.0;
  double total = 0.0;

  bool operator==(const LossBreakdown&) const = default;
};

/// A scalar objective in a graph together with its parts.
struct Objective {
  ad::Var total;
  LossBreakdown parts;
};

/// Frame MSE over all T' x D entries plus stop-head cross-entropy.
ad::Var standard_loss(const PassResult& pass, const FeatureSequence& y);

/// (1/T') * sum_t |a_t - b_t|^2 over two T' x d state matrices.
ad::Var omega(ad::Var states_a, ad::Var states_b);
double omega(const ad::Tensor& states_a, const ad::Tensor& states_b);

/// Trains `trainee` against a read-only `helper` of the opposite direction:
/// standard loss + lambda * MSE(trainee prediction, helper prediction), both
/// indexed by absolute position. `helper` is bound without gradients.
Objective model_agreement_loss(ad::Graph& g, DirectionalModel& trainee, const DirectionalModel& helper,
                               const SymbolSequence& x, const FeatureSequence& y, const TrainConfig& cfg);

/// Value of the agreement term alone for two models of opposite direction.
double agreement_term(const DirectionalModel& a, const DirectionalModel& b, const SymbolSequence& x,
                      const FeatureSequence& y, AgreementMode mode);

enum class Freeze : std::uint8_t { kNone = 0, kForward = 1, kBackward = 2 };

std::string_view freeze_name(Freeze f);

struct DecoderRegOptions {
  double lambda = 1.0;
  Freeze freeze = Freeze::kNone;
  // When false the regularizer is left out of the graph entirely.
  bool include_omega = true;
};

/// L(fwd) + L(bwd) + lambda * omega(forward states, backward states). A
/// frozen decoder is bound read-only on a detached copy of the encoder
/// output: its loss is reported but sends no gradient anywhere.
Objective decoder_reg_loss(ad::Graph& g, BiDecoderModel& m, const SymbolSequence& x, const FeatureSequence& y,
                           const DecoderRegOptions& options);

/// Throws FrozenGradientError if any of `params` holds a nonzero gradient.
void verify_frozen(std::span<ad::Parameter* const> params);

}  // namespace seqagree::train
