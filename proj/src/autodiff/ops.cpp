#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "seqagree/autodiff/graph.hpp"
#include "seqagree/errors.hpp"

namespace seqagree::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<RowMajor> mat(std::span<double> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<const RowMajor> cmat(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<Eigen::VectorXd> vec(std::span<double> v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

Eigen::Map<const Eigen::VectorXd> cvec(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// out (m x p) += op(a) * op(b), where op transposes when the flag is set and
// a, b are stored row-major with the given stored extents. Vector-shaped
// operands go through matrix-vector or outer-product kernels; Eigen would
// otherwise pick its blocked matrix-matrix path for dynamic sizes.
void product_add(std::span<double> out, std::size_t m, std::size_t p, std::span<const double> a, bool ta,
                 std::span<const double> b, bool tb, std::size_t k) {
  const auto A = cmat(a, ta ? k : m, ta ? m : k);
  const auto B = cmat(b, tb ? p : k, tb ? k : p);
  if (k == 1) {
    // Outer product of a length-m column and a length-p row.
    mat(out, m, p).noalias() += cvec(a) * cvec(b).transpose();
  } else if (p == 1) {
    if (ta) {
      vec(out).noalias() += A.transpose() * cvec(b);
    } else {
      vec(out).noalias() += A * cvec(b);
    }
  } else if (m == 1) {
    if (tb) {
      vec(out).noalias() += B * cvec(a);
    } else {
      vec(out).noalias() += B.transpose() * cvec(a);
    }
  } else if (ta && tb) {
    mat(out, m, p).noalias() += A.transpose() * B.transpose();
  } else if (ta) {
    mat(out, m, p).noalias() += A.transpose() * B;
  } else if (tb) {
    mat(out, m, p).noalias() += A * B.transpose();
  } else {
    mat(out, m, p).noalias() += A * B;
  }
}

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims dims(const Tensor& t, OpKind op) {
  if (t.rank() > 2) {
    throw ShapeError(std::string(op_name(op)) + ": expected a matrix, got " + shape_string(t.shape()));
  }
  return {t.rows(), t.cols()};
}

[[noreturn]] void mismatch(OpKind op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": incompatible extents " + shape_string(a.shape()) +
                   " and " + shape_string(b.shape()));
}

Graph& common_graph(OpKind op, Var a, Var b) {
  if (!a.valid() || !b.valid()) throw GraphError(std::string(op_name(op)) + ": unbound operand");
  if (&a.graph() != &b.graph()) throw GraphError(std::string(op_name(op)) + ": operands from different graphs");
  return a.graph();
}

Graph& graph_of(OpKind op, Var a) {
  if (!a.valid()) throw GraphError(std::string(op_name(op)) + ": unbound operand");
  return a.graph();
}

// True when `b` is a single row matching the columns of a multi-row `a`.
bool row_broadcast(const Tensor& a, const Tensor& b) {
  return a.rank() <= 2 && b.rank() <= 2 && b.rows() == 1 && a.rows() > 1 && b.cols() == a.cols();
}

Var elementwise_binary(OpKind op, Var a, Var b) {
  Graph& g = common_graph(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool bcast = !same && op != OpKind::kMul && row_broadcast(av, bv);
  if (!same && !bcast) mismatch(op, av, bv);
  Tensor out(av.shape());
  auto o = out.values();
  auto x = av.values();
  auto y = bv.values();
  const std::size_t cols = bcast ? av.cols() : 0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double yi = bcast ? y[i % cols] : y[i];
    switch (op) {
      case OpKind::kAdd: o[i] = x[i] + yi; break;
      case OpKind::kSub: o[i] = x[i] - yi; break;
      default: o[i] = x[i] * yi; break;
    }
  }
  const std::array<Var, 2> ins{a, b};
  return g.record(op, ins, std::move(out));
}

template <typename F>
Var elementwise_unary(OpKind op, Var a, F f) {
  Graph& g = graph_of(op, a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
  const std::array<Var, 1> ins{a};
  return g.record(op, ins, std::move(out));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  constexpr OpKind op = OpKind::kMatMul;
  Graph& g = common_graph(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Dims da = dims(av, op);
  const Dims db = dims(bv, op);
  if (da.cols != db.rows) mismatch(op, av, bv);
  Tensor out({da.rows, db.cols});
  product_add(out.values(), da.rows, db.cols, av.values(), false, bv.values(), false, da.cols);
  const std::array<Var, 2> ins{a, b};
  return g.record(op, ins, std::move(out));
}

Var add(Var a, Var b) { return elementwise_binary(OpKind::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise_binary(OpKind::kSub, a, b); }
Var mul(Var a, Var b) { return elementwise_binary(OpKind::kMul, a, b); }

Var concat(std::span<const Var> parts, int axis) {
  constexpr OpKind op = OpKind::kConcat;
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Graph& g = graph_of(op, parts[0]);
  const Dims first = dims(parts[0].value(), op);
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (!p.valid() || &p.graph() != &g) throw GraphError("concat: operands from different graphs");
    const Dims d = dims(p.value(), op);
    if (axis == 0 && d.cols != first.cols) mismatch(op, parts[0].value(), p.value());
    if (axis == 1 && d.rows != first.rows) mismatch(op, parts[0].value(), p.value());
    total += axis == 0 ? d.rows : d.cols;
  }
  Tensor out = axis == 0 ? Tensor({total, first.cols}) : Tensor({first.rows, total});
  auto o = out.values();
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const Dims d = dims(pv, op);
    auto x = pv.values();
    if (axis == 0) {
      std::copy(x.begin(), x.end(), o.begin() + static_cast<std::ptrdiff_t>(offset * first.cols));
      offset += d.rows;
    } else {
      for (std::size_t r = 0; r < d.rows; ++r) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * d.cols), d.cols,
                    o.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
      }
      offset += d.cols;
    }
  }
  OpAttributes attrs;
  attrs.axis = axis;
  return g.record(op, parts, std::move(out), attrs);
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  constexpr OpKind op = OpKind::kSlice;
  Graph& g = graph_of(op, a);
  const Tensor& av = a.value();
  const Dims d = dims(av, op);
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const std::size_t extent = axis == 0 ? d.rows : d.cols;
  if (begin >= end || end > extent) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside extent " + std::to_string(extent) + " of " + shape_string(av.shape()));
  }
  const std::size_t n = end - begin;
  Tensor out = axis == 0 ? Tensor({n, d.cols}) : Tensor({d.rows, n});
  auto o = out.values();
  auto x = av.values();
  if (axis == 0) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(begin * d.cols), n * d.cols, o.begin());
  } else {
    for (std::size_t r = 0; r < d.rows; ++r) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * d.cols + begin), n,
                  o.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
  }
  OpAttributes attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  const std::array<Var, 1> ins{a};
  return g.record(op, ins, std::move(out), attrs);
}

Var tanh(Var a) {
  return elementwise_unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); });
}

Var sigmoid(Var a) { return elementwise_unary(OpKind::kSigmoid, a, stable_sigmoid); }

Var relu(Var a) {
  return elementwise_unary(OpKind::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Var softmax(Var a, int axis) {
  constexpr OpKind op = OpKind::kSoftmax;
  Graph& g = graph_of(op, a);
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const Tensor& av = a.value();
  const Dims d = dims(av, op);
  Tensor out({d.rows, d.cols});
  const std::size_t groups = axis == 1 ? d.rows : d.cols;
  const std::size_t len = axis == 1 ? d.cols : d.rows;
  const std::size_t stride = axis == 1 ? 1 : d.cols;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = axis == 1 ? gi * d.cols : gi;
    double mx = av[base];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, av[base + k * stride]);
    double total = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      const double e = std::exp(av[base + k * stride] - mx);
      out[base + k * stride] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[base + k * stride] /= total;
  }
  OpAttributes attrs;
  attrs.axis = axis;
  const std::array<Var, 1> ins{a};
  return g.record(op, ins, std::move(out), attrs);
}

Var conv1d_same(Var signal, Var filters) {
  constexpr OpKind op = OpKind::kConv1d;
  Graph& g = common_graph(op, signal, filters);
  const Tensor& xv = signal.value();
  const Tensor& wv = filters.value();
  const Dims dx = dims(xv, op);
  if (wv.rank() != 3 || wv.shape()[1] != dx.cols) mismatch(op, xv, wv);
  const std::size_t width = wv.shape()[0];
  const std::size_t cin = wv.shape()[1];
  const std::size_t cout = wv.shape()[2];
  const std::size_t pad = (width - 1) / 2;
  Tensor out({dx.rows, cout});
  for (std::size_t t = 0; t < dx.rows; ++t) {
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(dx.rows)) continue;
      for (std::size_t c = 0; c < cin; ++c) {
        const double xin = xv[static_cast<std::size_t>(src) * cin + c];
        const std::size_t wbase = (k * cin + c) * cout;
        for (std::size_t o = 0; o < cout; ++o) out[t * cout + o] += xin * wv[wbase + o];
      }
    }
  }
  const std::array<Var, 2> ins{signal, filters};
  return g.record(op, ins, std::move(out));
}

Var mse(Var a, Var b) {
  constexpr OpKind op = OpKind::kMse;
  Graph& g = common_graph(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) mismatch(op, av, bv);
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    total += d * d;
  }
  const std::array<Var, 2> ins{a, b};
  return g.record(op, ins, Tensor::scalar(total / static_cast<double>(av.size())));
}

Var sum(Var a) {
  Graph& g = graph_of(OpKind::kSum, a);
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::array<Var, 1> ins{a};
  return g.record(OpKind::kSum, ins, Tensor::scalar(total));
}

Var scale(Var a, double factor) {
  Graph& g = graph_of(OpKind::kScale, a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  OpAttributes attrs;
  attrs.factor = factor;
  const std::array<Var, 1> ins{a};
  return g.record(OpKind::kScale, ins, std::move(out), attrs);
}

Var transpose(Var a) {
  constexpr OpKind op = OpKind::kTranspose;
  Graph& g = graph_of(op, a);
  const Tensor& av = a.value();
  const Dims d = dims(av, op);
  Tensor out({d.cols, d.rows});
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t c = 0; c < d.cols; ++c) out[c * d.rows + r] = av[r * d.cols + c];
  }
  const std::array<Var, 1> ins{a};
  return g.record(op, ins, std::move(out));
}

Var bce_with_logits(Var logits, Var targets) {
  constexpr OpKind op = OpKind::kBceWithLogits;
  Graph& g = common_graph(op, logits, targets);
  const Tensor& zv = logits.value();
  const Tensor& yv = targets.value();
  if (zv.shape() != yv.shape()) mismatch(op, zv, yv);
  double total = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double z = zv[i];
    total += std::max(z, 0.0) - z * yv[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const std::array<Var, 2> ins{logits, targets};
  return g.record(op, ins, Tensor::scalar(total / static_cast<double>(zv.size())));
}

// Reverse-mode rules. Each rule reads the upstream gradient of node `id` and
// adds its contribution into every input that requires a gradient.
void Graph::backward_node(std::uint32_t id) {
  const Node& n = nodes_[id];
  const Tensor& out = n.owned;
  std::span<const double> gout = out.grad();
  auto in_value = [&](std::size_t i) -> const Tensor& { return node_value(nodes_[n.inputs[i]]); };
  auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };
  auto in_grad = [&](std::size_t i) { return node_grad(n.inputs[i]); };

  switch (n.kind) {
    case OpKind::kMatMul: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
      if (wants(0)) product_add(in_grad(0), m, k, gout, false, b.values(), true, p);
      if (wants(1)) product_add(in_grad(1), k, p, a.values(), true, gout, false, m);
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      const double sign = n.kind == OpKind::kAdd ? 1.0 : -1.0;
      if (wants(0)) {
        auto ga = in_grad(0);
        for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i];
      }
      if (wants(1)) {
        auto gb = in_grad(1);
        if (gb.size() == gout.size()) {
          for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += sign * gout[i];
        } else {
          const std::size_t cols = gb.size();
          for (std::size_t i = 0; i < gout.size(); ++i) gb[i % cols] += sign * gout[i];
        }
      }
      break;
    }
    case OpKind::kMul: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      if (wants(0)) {
        auto ga = in_grad(0);
        for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * b[i];
      }
      if (wants(1)) {
        auto gb = in_grad(1);
        for (std::size_t i = 0; i < gout.size(); ++i) gb[i] += gout[i] * a[i];
      }
      break;
    }
    case OpKind::kConcat: {
      const std::size_t total_cols = out.cols();
      std::size_t offset = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        const Tensor& part = in_value(i);
        const std::size_t rows = part.rows(), cols = part.cols();
        if (wants(i)) {
          auto gp = in_grad(i);
          if (n.attrs.axis == 0) {
            for (std::size_t e = 0; e < part.size(); ++e) gp[e] += gout[offset * total_cols + e];
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t c = 0; c < cols; ++c) gp[r * cols + c] += gout[r * total_cols + offset + c];
            }
          }
        }
        offset += n.attrs.axis == 0 ? rows : cols;
      }
      break;
    }
    case OpKind::kSlice: {
      if (!wants(0)) break;
      const Tensor& a = in_value(0);
      auto ga = in_grad(0);
      const std::size_t cols = a.cols();
      const std::size_t width = n.attrs.end - n.attrs.begin;
      if (n.attrs.axis == 0) {
        for (std::size_t e = 0; e < gout.size(); ++e) ga[n.attrs.begin * cols + e] += gout[e];
      } else {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          for (std::size_t c = 0; c < width; ++c) ga[r * cols + n.attrs.begin + c] += gout[r * width + c];
        }
      }
      break;
    }
    case OpKind::kTanh: {
      auto ga = in_grad(0);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * (1.0 - out[i] * out[i]);
      break;
    }
    case OpKind::kSigmoid: {
      auto ga = in_grad(0);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * out[i] * (1.0 - out[i]);
      break;
    }
    case OpKind::kRelu: {
      auto ga = in_grad(0);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += out[i] > 0.0 ? gout[i] : 0.0;
      break;
    }
    case OpKind::kSoftmax: {
      auto ga = in_grad(0);
      const std::size_t rows = out.rows(), cols = out.cols();
      const bool by_row = n.attrs.axis == 1;
      const std::size_t groups = by_row ? rows : cols;
      const std::size_t len = by_row ? cols : rows;
      const std::size_t stride = by_row ? 1 : cols;
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const std::size_t base = by_row ? gi * cols : gi;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += gout[base + k * stride] * out[base + k * stride];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t e = base + k * stride;
          ga[e] += out[e] * (gout[e] - dot);
        }
      }
      break;
    }
    case OpKind::kConv1d: {
      const Tensor& x = in_value(0);
      const Tensor& w = in_value(1);
      const std::size_t steps = x.rows();
      const std::size_t width = w.shape()[0], cin = w.shape()[1], cout = w.shape()[2];
      const std::size_t pad = (width - 1) / 2;
      const bool gx_on = wants(0), gw_on = wants(1);
      std::span<double> gx = gx_on ? in_grad(0) : std::span<double>{};
      std::span<double> gw = gw_on ? in_grad(1) : std::span<double>{};
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(steps)) continue;
          const auto s = static_cast<std::size_t>(src);
          for (std::size_t c = 0; c < cin; ++c) {
            const std::size_t wbase = (k * cin + c) * cout;
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = gout[t * cout + o];
              acc += go * w[wbase + o];
              if (gw_on) gw[wbase + o] += go * x[s * cin + c];
            }
            if (gx_on) gx[s * cin + c] += acc;
          }
        }
      }
      break;
    }
    case OpKind::kMse: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      const double coef = 2.0 * gout[0] / static_cast<double>(a.size());
      if (wants(0)) {
        auto ga = in_grad(0);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += coef * (a[i] - b[i]);
      }
      if (wants(1)) {
        auto gb = in_grad(1);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= coef * (a[i] - b[i]);
      }
      break;
    }
    case OpKind::kSum: {
      auto ga = in_grad(0);
      for (double& g : ga) g += gout[0];
      break;
    }
    case OpKind::kScale: {
      auto ga = in_grad(0);
      for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += gout[i] * n.attrs.factor;
      break;
    }
    case OpKind::kTranspose: {
      auto ga = in_grad(0);
      const std::size_t rows = out.rows(), cols = out.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[c * rows + r] += gout[r * cols + c];
      }
      break;
    }
    case OpKind::kBceWithLogits: {
      const Tensor& z = in_value(0);
      const Tensor& y = in_value(1);
      const double coef = gout[0] / static_cast<double>(z.size());
      if (wants(0)) {
        auto gz = in_grad(0);
        for (std::size_t i = 0; i < z.size(); ++i) gz[i] += coef * (stable_sigmoid(z[i]) - y[i]);
      }
      if (wants(1)) {
        auto gy = in_grad(1);
        for (std::size_t i = 0; i < z.size(); ++i) gy[i] -= coef * z[i];
      }
      break;
    }
    case OpKind::kLeaf:
    case OpKind::kConstant:
      break;
  }
}

}  // namespace seqagree::ad
