#include "seqagree/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "seqagree/errors.hpp"

namespace seqagree::ad {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& build) {
  Graph g;
  Var loss = build(g);
  if (loss.value().size() != 1) throw GraphError("grad_check: loss must be scalar");
  return loss.value()[0];
}

bool bitwise_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::span<Tensor* const> params,
                           std::span<const std::string> names, const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (names.size() != params.size()) throw std::invalid_argument("grad_check: one name per tensor");

  const double first = evaluate(build);
  const double second = evaluate(build);
  if (!bitwise_equal(first, second)) {
    throw NonDeterministicError("grad_check: loss differs between identical evaluations");
  }

  for (Tensor* t : params) t->zero_grad();
  {
    Graph g;
    Var loss = build(g);
    g.backward(loss);
  }

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p];
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    GradCheckEntry entry;
    entry.name = names[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + options.step;
      const double up = evaluate(build);
      t[i] = saved - options.step;
      const double down = evaluate(build);
      t[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double err = relative_error(analytic[i], numeric, options.relative_floor);
      if (err > entry.max_relative_error || i == 0) {
        entry.max_relative_error = std::max(err, entry.max_relative_error);
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    report.max_relative_error = std::max(report.max_relative_error, entry.max_relative_error);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

GradCheckReport grad_check(const LossBuilder& build, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  std::vector<Tensor*> tensors;
  std::vector<std::string> names;
  for (Parameter* p : params) {
    tensors.push_back(&p->tensor());
    names.push_back(p->name());
  }
  return grad_check(build, tensors, names, options);
}

}  // namespace seqagree::ad
