#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "neustrom/gemm.hpp"
#include "neustrom/tensor.hpp"

namespace neustrom {

/// Arguments to log() are clamped at this floor before taking the logarithm.
/// Feature dot products are nonnegative, so exact zeros occur for disjoint
/// supports and must not produce -inf values or infinite gradients.
inline constexpr double kLogEps = 1e-12;

enum class Op : uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kScale,
  kMul,
  kRelu,
  kPrelu,
  kL2Norm,
  kDot,
  kLog,
  kDivide,
  kSum,
  kExp,
  kNegate,
  kConcat,
  kCos,
  kSin,
  kSqrt,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kScale: return "scale";
    case Op::kMul: return "elementwise-multiply";
    case Op::kRelu: return "relu";
    case Op::kPrelu: return "prelu";
    case Op::kL2Norm: return "l2norm";
    case Op::kDot: return "dot";
    case Op::kLog: return "log";
    case Op::kDivide: return "divide";
    case Op::kSum: return "sum";
    case Op::kExp: return "exp";
    case Op::kNegate: return "negate";
    case Op::kConcat: return "concat";
    case Op::kCos: return "cos";
    case Op::kSin: return "sin";
    case Op::kSqrt: return "sqrt";
  }
  return "?";
}

/// Handle to a value recorded on a Tape.
struct VarId {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
  friend bool operator==(VarId a, VarId b) { return a.idx == b.idx; }
};

/// Reverse-mode automatic differentiation over a flat operation record.
///
/// Nodes are appended in execution order, which is already a topological
/// order (an input must exist before it can be consumed), so the backward
/// sweep is a single reverse pass that visits each node once. Values and
/// gradients live in arenas that are recycled by reset(), keeping the
/// per-step allocation cost of a training loop near zero.
///
/// Elementwise binary ops (add, elementwise-multiply, divide) accept either
/// two operands of identical shape or one full-shape operand and one scalar
/// (rank 0), which is broadcast. No other broadcasting exists; matrix-shaped
/// broadcasts are expressed with explicit ones-vector matmuls.
class Tape {
 public:
  Tape() { scratch_.reserve(1 << 12); }

  // ---- construction of leaves ----

  VarId leaf(const Tensor& t) { return leaf(t, t.grad_enabled()); }

  VarId leaf(const Tensor& t, bool needs_grad) {
    VarId id = push(Op::kLeaf, {}, {}, t.shape(), needs_grad);
    double* out = val(id);
    const auto& v = t.values();
    for (size_t i = 0; i < v.size(); ++i) out[i] = v[i];
    return id;
  }

  /// Constant-filled leaf created directly in the arena (no Tensor temp).
  VarId constant(Shape shape, double fill) {
    VarId id = push(Op::kLeaf, {}, {}, std::move(shape), false);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = fill;
    return id;
  }

  // ---- primitives ----

  VarId matmul(VarId a, VarId b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw std::invalid_argument(std::string("matmul: incompatible shapes ") + shape_str(sa) +
                                  " x " + shape_str(sb));
    VarId id = push(Op::kMatMul, a, b, {sa[0], sb[1]}, any_grad(a, b));
    const int m = sa[0], k = sa[1], n = sb[1];
    double* out = val(id);
    std::fill(out, out + static_cast<size_t>(m) * n, 0.0);
    detail::gemm_nn(val(a), val(b), out, m, k, n);
    return finish(id);
  }

  VarId add(VarId a, VarId b) { return binary(Op::kAdd, a, b); }
  VarId mul(VarId a, VarId b) { return binary(Op::kMul, a, b); }
  VarId divide(VarId a, VarId b) { return binary(Op::kDivide, a, b); }

  VarId scale(VarId a, double factor) {
    VarId id = push(Op::kScale, a, {}, shape(a), any_grad(a, {}));
    node(id).payload = factor;
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = factor * x[i];
    return finish(id);
  }

  VarId relu(VarId a) {
    VarId id = push(Op::kRelu, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return finish(id);
  }

  /// PReLU with a learnable scalar negative slope.
  VarId prelu(VarId a, VarId slope) {
    if (shape(slope).size() != 0)
      throw std::invalid_argument("prelu: slope must be a scalar, got " + shape_str(shape(slope)));
    VarId id = push(Op::kPrelu, a, slope, shape(a), any_grad(a, slope));
    const double s = *val(slope);
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = x[i] > 0.0 ? x[i] : s * x[i];
    return finish(id);
  }

  VarId l2norm(VarId a) {
    VarId id = push(Op::kL2Norm, a, {}, {}, any_grad(a, {}));
    const double* x = val(a);
    double acc = 0.0;
    for (int64_t i = 0; i < len(a); ++i) acc += x[i] * x[i];
    *val(id) = std::sqrt(acc);
    return finish(id);
  }

  VarId dot(VarId a, VarId b) {
    if (shape(a) != shape(b))
      throw std::invalid_argument(std::string("dot: shape mismatch ") + shape_str(shape(a)) +
                                  " vs " + shape_str(shape(b)));
    VarId id = push(Op::kDot, a, b, {}, any_grad(a, b));
    const double* x = val(a);
    const double* y = val(b);
    double acc = 0.0;
    for (int64_t i = 0; i < len(a); ++i) acc += x[i] * y[i];
    *val(id) = acc;
    return finish(id);
  }

  VarId log(VarId a) {
    VarId id = push(Op::kLog, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = std::log(x[i] > kLogEps ? x[i] : kLogEps);
    return finish(id);
  }

  VarId sum(VarId a) {
    VarId id = push(Op::kSum, a, {}, {}, any_grad(a, {}));
    const double* x = val(a);
    double acc = 0.0;
    for (int64_t i = 0; i < len(a); ++i) acc += x[i];
    *val(id) = acc;
    return finish(id);
  }

  VarId exp(VarId a) {
    VarId id = push(Op::kExp, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = std::exp(x[i]);
    return finish(id);
  }

  VarId negate(VarId a) {
    VarId id = push(Op::kNegate, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = -x[i];
    return finish(id);
  }

  VarId cos(VarId a) {
    VarId id = push(Op::kCos, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = std::cos(x[i]);
    return finish(id);
  }

  VarId sin(VarId a) {
    VarId id = push(Op::kSin, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = std::sin(x[i]);
    return finish(id);
  }

  /// sqrt(max(x, 0)); the backward factor is clamped so a zero argument
  /// cannot emit an infinite gradient.
  VarId sqrt(VarId a) {
    VarId id = push(Op::kSqrt, a, {}, shape(a), any_grad(a, {}));
    const double* x = val(a);
    double* out = val(id);
    for (int64_t i = 0; i < len(id); ++i) out[i] = std::sqrt(x[i] > 0.0 ? x[i] : 0.0);
    return finish(id);
  }

  /// Concatenate along `axis`. Rank-1 inputs concatenate along axis 0;
  /// rank-2 inputs stack rows (axis 0) or append columns (axis 1).
  VarId concat(VarId a, VarId b, int axis) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    Shape out_shape;
    if (sa.size() == 1 && sb.size() == 1 && axis == 0) {
      out_shape = {sa[0] + sb[0]};
    } else if (sa.size() == 2 && sb.size() == 2 && axis == 0 && sa[1] == sb[1]) {
      out_shape = {sa[0] + sb[0], sa[1]};
    } else if (sa.size() == 2 && sb.size() == 2 && axis == 1 && sa[0] == sb[0]) {
      out_shape = {sa[0], sa[1] + sb[1]};
    } else {
      throw std::invalid_argument(std::string("concat: cannot join ") + shape_str(sa) + " and " +
                                  shape_str(sb) + " along axis " + std::to_string(axis));
    }
    VarId id = push(Op::kConcat, a, b, std::move(out_shape), any_grad(a, b));
    node(id).aux = axis;
    const double* x = val(a);
    const double* y = val(b);
    double* out = val(id);
    if (shape(id).size() == 1 || axis == 0) {
      std::copy(x, x + len(a), out);
      std::copy(y, y + len(b), out + len(a));
    } else {
      const int rows = sa[0], ca = sa[1], cb = sb[1];
      for (int r = 0; r < rows; ++r) {
        std::copy(x + static_cast<size_t>(r) * ca, x + static_cast<size_t>(r + 1) * ca,
                  out + static_cast<size_t>(r) * (ca + cb));
        std::copy(y + static_cast<size_t>(r) * cb, y + static_cast<size_t>(r + 1) * cb,
                  out + static_cast<size_t>(r) * (ca + cb) + ca);
      }
    }
    return finish(id);
  }

  // ---- results ----

  const Shape& shape(VarId id) const { return nodes_[static_cast<size_t>(id.idx)].shape; }
  int64_t len(VarId id) const { return nodes_[static_cast<size_t>(id.idx)].length; }

  std::span<const double> value(VarId id) const {
    const NodeRec& n = nodes_[static_cast<size_t>(id.idx)];
    return {values_.data() + n.offset, static_cast<size_t>(n.length)};
  }
  std::span<const double> grad(VarId id) const {
    const NodeRec& n = nodes_[static_cast<size_t>(id.idx)];
    return {grads_.data() + n.offset, static_cast<size_t>(n.length)};
  }
  double value_scalar(VarId id) const { return value(id)[0]; }

  Tensor value_tensor(VarId id) const {
    auto v = value(id);
    return Tensor(shape(id), std::vector<double>(v.begin(), v.end()));
  }
  Tensor grad_tensor(VarId id) const {
    auto g = grad(id);
    return Tensor(shape(id), std::vector<double>(g.begin(), g.end()));
  }

  size_t node_count() const { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Fills gradient storage for every
  /// grad-participating node; nodes outside the differentiable cone are
  /// skipped entirely.
  void backward(VarId loss) {
    if (!loss.valid() || !shape(loss).empty())
      throw std::invalid_argument("backward: loss must be a scalar recorded on this tape");
    grads_.assign(values_.size(), 0.0);
    grads_[nodes_[static_cast<size_t>(loss.idx)].offset] = 1.0;
    for (int32_t i = loss.idx; i >= 0; --i) {
      const NodeRec& n = nodes_[static_cast<size_t>(i)];
      if (!n.needs_grad || n.op == Op::kLeaf) continue;
      backprop_node(static_cast<size_t>(i));
    }
  }

  /// Gradients for named leaves, keyed by name. Names missing from the tape
  /// cone come back as zero tensors of the leaf shape.
  std::map<std::string, Tensor> gradients(const std::vector<std::pair<std::string, VarId>>& leaves) const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : leaves) out.emplace(name, grad_tensor(id));
    return out;
  }

  /// Drop all nodes but keep arena capacity for the next step.
  void reset() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
  }

 private:
  struct NodeRec {
    Op op;
    int32_t a = -1, b = -1;
    double payload = 0.0;
    int aux = 0;
    Shape shape;
    size_t offset = 0;
    int64_t length = 0;
    bool needs_grad = false;
  };

  NodeRec& node(VarId id) { return nodes_[static_cast<size_t>(id.idx)]; }
  double* val(VarId id) { return values_.data() + nodes_[static_cast<size_t>(id.idx)].offset; }
  const double* val(VarId id) const {
    return values_.data() + nodes_[static_cast<size_t>(id.idx)].offset;
  }
  double* grd(size_t i) { return grads_.data() + nodes_[i].offset; }

  bool any_grad(VarId a, VarId b) const {
    bool g = false;
    if (a.valid()) g = g || nodes_[static_cast<size_t>(a.idx)].needs_grad;
    if (b.valid()) g = g || nodes_[static_cast<size_t>(b.idx)].needs_grad;
    return g;
  }

  VarId push(Op op, VarId a, VarId b, Shape shape, bool needs_grad) {
    NodeRec n;
    n.op = op;
    n.a = a.idx;
    n.b = b.idx;
    n.shape = std::move(shape);
    n.length = numel(n.shape);
    n.offset = values_.size();
    n.needs_grad = needs_grad;
    values_.resize(values_.size() + static_cast<size_t>(n.length));
    nodes_.push_back(std::move(n));
    return VarId{static_cast<int32_t>(nodes_.size() - 1)};
  }

  VarId finish(VarId id) {
#ifndef NDEBUG
    for (double v : value(id))
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite value produced by ") +
                                 op_name(nodes_[static_cast<size_t>(id.idx)].op));
#endif
    return id;
  }

  // Elementwise binary with optional rank-0 broadcast on either side.
  VarId binary(Op op, VarId a, VarId b) {
    const Shape& sa = shape(a);
    const Shape& sb = shape(b);
    const bool a_scalar = sa.empty();
    const bool b_scalar = sb.empty();
    if (!(sa == sb || a_scalar || b_scalar))
      throw std::invalid_argument(std::string(op_name(op)) + ": shape mismatch " + shape_str(sa) +
                                  " vs " + shape_str(sb));
    Shape out_shape = a_scalar ? sb : sa;
    VarId id = push(op, a, b, std::move(out_shape), any_grad(a, b));
    const double* x = val(a);
    const double* y = val(b);
    double* out = val(id);
    const int64_t n = len(id);
    const int64_t sx = a_scalar && n > 1 ? 0 : 1;
    const int64_t sy = b_scalar && n > 1 ? 0 : 1;
    switch (op) {
      case Op::kAdd:
        for (int64_t i = 0; i < n; ++i) out[i] = x[i * sx] + y[i * sy];
        break;
      case Op::kMul:
        for (int64_t i = 0; i < n; ++i) out[i] = x[i * sx] * y[i * sy];
        break;
      case Op::kDivide:
        for (int64_t i = 0; i < n; ++i) out[i] = x[i * sx] / y[i * sy];
        break;
      default:
        throw std::logic_error("binary: unexpected op");
    }
    return finish(id);
  }

  void backprop_node(size_t i) {
    const NodeRec& n = nodes_[i];
    const double* go = grads_.data() + n.offset;  // upstream gradient
    const double* out = values_.data() + n.offset;
    const size_t ia = static_cast<size_t>(n.a);
    const size_t ib = static_cast<size_t>(n.b);
    const bool ga = n.a >= 0 && nodes_[ia].needs_grad;
    const bool gb = n.b >= 0 && nodes_[ib].needs_grad;

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatMul: {
        const int m = nodes_[ia].shape[0], k = nodes_[ia].shape[1], nn = nodes_[ib].shape[1];
        if (ga) {
          // dA += dC * B^T
          scratch_.resize(static_cast<size_t>(k) * nn);
          detail::transpose(values_.data() + nodes_[ib].offset, scratch_.data(), k, nn);
          detail::gemm_nn(go, scratch_.data(), grd(ia), m, nn, k);
        }
        if (gb) {
          // dB += A^T * dC
          scratch_.resize(static_cast<size_t>(m) * k);
          detail::transpose(values_.data() + nodes_[ia].offset, scratch_.data(), m, k);
          detail::gemm_nn(scratch_.data(), go, grd(ib), k, m, nn);
        }
        break;
      }
      case Op::kAdd: {
        accumulate_elementwise(ia, ga, n.length, [&](int64_t j, int64_t /*sx*/) { return go[j]; });
        accumulate_elementwise(ib, gb, n.length, [&](int64_t j, int64_t /*sy*/) { return go[j]; });
        break;
      }
      case Op::kMul: {
        const double* x = values_.data() + nodes_[ia].offset;
        const double* y = values_.data() + nodes_[ib].offset;
        const int64_t sx = nodes_[ia].length == 1 && n.length > 1 ? 0 : 1;
        const int64_t sy = nodes_[ib].length == 1 && n.length > 1 ? 0 : 1;
        accumulate_elementwise(ia, ga, n.length, [&](int64_t j, int64_t) { return go[j] * y[j * sy]; });
        accumulate_elementwise(ib, gb, n.length, [&](int64_t j, int64_t) { return go[j] * x[j * sx]; });
        break;
      }
      case Op::kDivide: {
        const double* x = values_.data() + nodes_[ia].offset;
        const double* y = values_.data() + nodes_[ib].offset;
        const int64_t sx = nodes_[ia].length == 1 && n.length > 1 ? 0 : 1;
        const int64_t sy = nodes_[ib].length == 1 && n.length > 1 ? 0 : 1;
        accumulate_elementwise(ia, ga, n.length, [&](int64_t j, int64_t) { return go[j] / y[j * sy]; });
        accumulate_elementwise(ib, gb, n.length, [&](int64_t j, int64_t) {
          const double yv = y[j * sy];
          return -go[j] * x[j * sx] / (yv * yv);
        });
        break;
      }
      case Op::kScale: {
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] += n.payload * go[j];
        }
        break;
      }
      case Op::kRelu: {
        if (ga) {
          const double* x = values_.data() + nodes_[ia].offset;
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j)
            if (x[j] > 0.0) gx[j] += go[j];
        }
        break;
      }
      case Op::kPrelu: {
        const double* x = values_.data() + nodes_[ia].offset;
        const double s = values_[nodes_[ib].offset];
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] += go[j] * (x[j] > 0.0 ? 1.0 : s);
        }
        if (gb) {
          double acc = 0.0;
          for (int64_t j = 0; j < n.length; ++j)
            if (x[j] <= 0.0) acc += go[j] * x[j];
          *grd(ib) += acc;
        }
        break;
      }
      case Op::kL2Norm: {
        if (ga) {
          const double norm = out[0];
          if (norm > 0.0) {
            const double* x = values_.data() + nodes_[ia].offset;
            double* gx = grd(ia);
            const double f = go[0] / norm;
            for (int64_t j = 0; j < nodes_[ia].length; ++j) gx[j] += f * x[j];
          }
        }
        break;
      }
      case Op::kDot: {
        const double* x = values_.data() + nodes_[ia].offset;
        const double* y = values_.data() + nodes_[ib].offset;
        const double g0 = go[0];
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < nodes_[ia].length; ++j) gx[j] += g0 * y[j];
        }
        if (gb) {
          double* gy = grd(ib);
          for (int64_t j = 0; j < nodes_[ib].length; ++j) gy[j] += g0 * x[j];
        }
        break;
      }
      case Op::kLog: {
        if (ga) {
          const double* x = values_.data() + nodes_[ia].offset;
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j)
            if (x[j] > kLogEps) gx[j] += go[j] / x[j];
        }
        break;
      }
      case Op::kSum: {
        if (ga) {
          double* gx = grd(ia);
          const double g0 = go[0];
          for (int64_t j = 0; j < nodes_[ia].length; ++j) gx[j] += g0;
        }
        break;
      }
      case Op::kExp: {
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] += go[j] * out[j];
        }
        break;
      }
      case Op::kNegate: {
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] -= go[j];
        }
        break;
      }
      case Op::kCos: {
        if (ga) {
          const double* x = values_.data() + nodes_[ia].offset;
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] -= go[j] * std::sin(x[j]);
        }
        break;
      }
      case Op::kSin: {
        if (ga) {
          const double* x = values_.data() + nodes_[ia].offset;
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) gx[j] += go[j] * std::cos(x[j]);
        }
        break;
      }
      case Op::kSqrt: {
        if (ga) {
          double* gx = grd(ia);
          for (int64_t j = 0; j < n.length; ++j) {
            const double denom = out[j] > 1e-12 ? out[j] : 1e-12;
            gx[j] += go[j] * 0.5 / denom;
          }
        }
        break;
      }
      case Op::kConcat: {
        const int64_t la = nodes_[ia].length;
        if (n.shape.size() == 1 || n.aux == 0) {
          if (ga) {
            double* gx = grd(ia);
            for (int64_t j = 0; j < la; ++j) gx[j] += go[j];
          }
          if (gb) {
            double* gy = grd(ib);
            for (int64_t j = 0; j < nodes_[ib].length; ++j) gy[j] += go[la + j];
          }
        } else {
          const int rows = n.shape[0];
          const int ca = nodes_[ia].shape[1], cb = nodes_[ib].shape[1];
          for (int r = 0; r < rows; ++r) {
            const double* gr = go + static_cast<size_t>(r) * (ca + cb);
            if (ga) {
              double* gx = grd(ia) + static_cast<size_t>(r) * ca;
              for (int c = 0; c < ca; ++c) gx[c] += gr[c];
            }
            if (gb) {
              double* gy = grd(ib) + static_cast<size_t>(r) * cb;
              for (int c = 0; c < cb; ++c) gy[c] += gr[ca + c];
            }
          }
        }
        break;
      }
    }
  }

  template <typename F>
  void accumulate_elementwise(size_t input, bool wants, int64_t n, F&& contribution) {
    if (!wants) return;
    double* gx = grd(input);
    if (nodes_[input].length == 1 && n > 1) {
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += contribution(j, 0);
      gx[0] += acc;
    } else {
      for (int64_t j = 0; j < n; ++j) gx[j] += contribution(j, 1);
    }
  }

  std::vector<NodeRec> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<double> scratch_;
};

}  // namespace neustrom
