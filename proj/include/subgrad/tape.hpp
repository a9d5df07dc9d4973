#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"

namespace subgrad {

// Closed-world primitive set: each primitive ships with its exact Jacobian on
// smooth points, a Clarke-Jacobian selection rule at kinks, and a kink-gap
// measure. User-extensible closures would break those guarantees.
enum class PrimKind {
  InputW,
  InputS,
  Const,
  Add,
  Sub,
  Mul,        // elementwise
  MatVec,     // (matrix node, vector node) -> vector
  Dot,
  Abs,
  Relu,
  Max2,       // elementwise max of two nodes
  SquaredLoss,  // 0.5 * ||a - b||^2
  Norm1,        // sum_i |x_i|
  AffineLayer,  // params [W row-major, b], input x -> W x + b
};

inline const char* prim_name(PrimKind k) {
  switch (k) {
    case PrimKind::InputW: return "input_w";
    case PrimKind::InputS: return "input_s";
    case PrimKind::Const: return "const";
    case PrimKind::Add: return "add";
    case PrimKind::Sub: return "sub";
    case PrimKind::Mul: return "mul";
    case PrimKind::MatVec: return "matvec";
    case PrimKind::Dot: return "dot";
    case PrimKind::Abs: return "abs";
    case PrimKind::Relu: return "relu";
    case PrimKind::Max2: return "max2";
    case PrimKind::SquaredLoss: return "squared_loss";
    case PrimKind::Norm1: return "norm1";
    case PrimKind::AffineLayer: return "affine_layer";
  }
  return "?";
}

/// Choice of Clarke-subdifferential element at each primitive's kinks.
/// The defaults match what common reverse-mode frameworks do, including the
/// zero output they produce for relu(w)-relu(-w) at w=0.
struct SelectionPolicy {
  double abs_at_zero = 0.0;     // in [-1, 1], also used by Norm1
  double relu_at_zero = 0.0;    // in [0, 1]
  double max2_tie_first = 1.0;  // weight on the first argument, in [0, 1]

  void validate() const {
    require(abs_at_zero >= -1.0 && abs_at_zero <= 1.0, ErrorCode::InvalidSpec,
            "abs selection outside [-1,1]");
    require(relu_at_zero >= 0.0 && relu_at_zero <= 1.0, ErrorCode::InvalidSpec,
            "relu selection outside [0,1]");
    require(max2_tie_first >= 0.0 && max2_tie_first <= 1.0, ErrorCode::InvalidSpec,
            "max2 tie weight outside [0,1]");
  }
  bool operator==(const SelectionPolicy&) const = default;
};

struct TapeNode {
  PrimKind kind;
  int a = -1;
  int b = -1;
  int offset = 0;  // InputW/InputS slice start
  int rows = 0;    // MatVec/AffineLayer shape
  int cols = 0;
  Vec constant;
  int out_len = 0;
  int val_offset = 0;
};

class TapeWorkspace {
 public:
  Vec values;
  Vec adjoints;
};

/// Composition of piecewise-smooth primitives, stored in topological order by
/// construction. Evaluation is a pure function of (w, s); concurrent use is
/// safe with per-call workspaces.
class ExprGraph {
 public:
  ExprGraph(std::size_t w_dim, std::size_t s_dim) : w_dim_(w_dim), s_dim_(s_dim) {}

  int input_w(int offset, int len) {
    require(offset >= 0 && len >= 1 &&
                static_cast<std::size_t>(offset + len) <= w_dim_,
            ErrorCode::DimensionMismatch, "input_w slice out of range");
    return push({PrimKind::InputW, -1, -1, offset, 0, 0, {}, len});
  }
  int input_s(int offset, int len) {
    require(offset >= 0 && len >= 1 &&
                static_cast<std::size_t>(offset + len) <= s_dim_,
            ErrorCode::DimensionMismatch, "input_s slice out of range");
    return push({PrimKind::InputS, -1, -1, offset, 0, 0, {}, len});
  }
  int constant(Vec v) {
    require(!v.empty(), ErrorCode::InvalidSpec, "empty constant");
    int len = static_cast<int>(v.size());
    return push({PrimKind::Const, -1, -1, 0, 0, 0, std::move(v), len});
  }
  int add(int a, int b) { return binary_same(PrimKind::Add, a, b); }
  int sub(int a, int b) { return binary_same(PrimKind::Sub, a, b); }
  int mul(int a, int b) { return binary_same(PrimKind::Mul, a, b); }
  int max2(int a, int b) { return binary_same(PrimKind::Max2, a, b); }
  int abs(int a) { return unary_same(PrimKind::Abs, a); }
  int relu(int a) { return unary_same(PrimKind::Relu, a); }
  int dot(int a, int b) {
    check_same_len(a, b);
    return push({PrimKind::Dot, a, b, 0, 0, 0, {}, 1});
  }
  int squared_loss(int pred, int target) {
    check_same_len(pred, target);
    return push({PrimKind::SquaredLoss, pred, target, 0, 0, 0, {}, 1});
  }
  int norm1(int a) {
    check_node(a);
    return push({PrimKind::Norm1, a, -1, 0, 0, 0, {}, 1});
  }
  int matvec(int m, int x, int rows, int cols) {
    check_node(m);
    check_node(x);
    require(rows >= 1 && cols >= 1 && nodes_[m].out_len == rows * cols &&
                nodes_[x].out_len == cols,
            ErrorCode::DimensionMismatch, "matvec shape mismatch");
    return push({PrimKind::MatVec, m, x, 0, rows, cols, {}, rows});
  }
  int affine_layer(int params, int x, int rows, int cols) {
    check_node(params);
    check_node(x);
    require(rows >= 1 && cols >= 1 &&
                nodes_[params].out_len == rows * cols + rows &&
                nodes_[x].out_len == cols,
            ErrorCode::DimensionMismatch, "affine layer shape mismatch");
    return push({PrimKind::AffineLayer, params, x, 0, rows, cols, {}, rows});
  }

  void set_output(int node) {
    check_node(node);
    require(nodes_[node].out_len == 1, ErrorCode::DimensionMismatch,
            "output must be scalar");
    output_ = node;
  }

  std::size_t w_dim() const { return w_dim_; }
  std::size_t s_dim() const { return s_dim_; }
  int output() const { return output_; }
  const std::vector<TapeNode>& nodes() const { return nodes_; }
  std::size_t scalar_count() const { return total_scalars_; }

 private:
  int push(TapeNode n) {
    n.val_offset = static_cast<int>(total_scalars_);
    total_scalars_ += static_cast<std::size_t>(n.out_len);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }
  void check_node(int i) const {
    require(i >= 0 && i < static_cast<int>(nodes_.size()),
            ErrorCode::InvalidSpec, "node id out of range");
  }
  void check_same_len(int a, int b) const {
    check_node(a);
    check_node(b);
    require(nodes_[a].out_len == nodes_[b].out_len, ErrorCode::DimensionMismatch,
            std::string("operand length mismatch"));
  }
  int binary_same(PrimKind k, int a, int b) {
    check_same_len(a, b);
    return push({k, a, b, 0, 0, 0, {}, nodes_[a].out_len});
  }
  int unary_same(PrimKind k, int a) {
    check_node(a);
    return push({k, a, -1, 0, 0, 0, {}, nodes_[a].out_len});
  }

  std::size_t w_dim_, s_dim_;
  std::vector<TapeNode> nodes_;
  std::size_t total_scalars_ = 0;
  int output_ = -1;
};

namespace detail {

inline void check_eval_args(const ExprGraph& g, std::span<const double> w,
                            std::span<const double> s) {
  require(g.output() >= 0, ErrorCode::InvalidSpec, "graph has no output");
  require(w.size() == g.w_dim(), ErrorCode::DimensionMismatch, "w dimension");
  require(s.size() == g.s_dim(), ErrorCode::DimensionMismatch, "s dimension");
}

inline void forward_pass(const ExprGraph& g, std::span<const double> w,
                         std::span<const double> s, TapeWorkspace& ws) {
  ws.values.resize(g.scalar_count());
  double* vals = ws.values.data();
  for (const TapeNode& n : g.nodes()) {
    double* out = vals + n.val_offset;
    const double* va = n.a >= 0 ? vals + g.nodes()[n.a].val_offset : nullptr;
    const double* vb = n.b >= 0 ? vals + g.nodes()[n.b].val_offset : nullptr;
    switch (n.kind) {
      case PrimKind::InputW:
        for (int i = 0; i < n.out_len; ++i) out[i] = w[n.offset + i];
        break;
      case PrimKind::InputS:
        for (int i = 0; i < n.out_len; ++i) out[i] = s[n.offset + i];
        break;
      case PrimKind::Const:
        std::copy(n.constant.begin(), n.constant.end(), out);
        break;
      case PrimKind::Add:
        for (int i = 0; i < n.out_len; ++i) out[i] = va[i] + vb[i];
        break;
      case PrimKind::Sub:
        for (int i = 0; i < n.out_len; ++i) out[i] = va[i] - vb[i];
        break;
      case PrimKind::Mul:
        for (int i = 0; i < n.out_len; ++i) out[i] = va[i] * vb[i];
        break;
      case PrimKind::MatVec:
        for (int r = 0; r < n.rows; ++r) {
          double acc = 0;
          const double* row = va + r * n.cols;
          for (int c = 0; c < n.cols; ++c) acc += row[c] * vb[c];
          out[r] = acc;
        }
        break;
      case PrimKind::Dot: {
        double acc = 0;
        int len = g.nodes()[n.a].out_len;
        for (int i = 0; i < len; ++i) acc += va[i] * vb[i];
        out[0] = acc;
        break;
      }
      case PrimKind::Abs:
        for (int i = 0; i < n.out_len; ++i) out[i] = std::abs(va[i]);
        break;
      case PrimKind::Relu:
        for (int i = 0; i < n.out_len; ++i) out[i] = va[i] > 0 ? va[i] : 0.0;
        break;
      case PrimKind::Max2:
        for (int i = 0; i < n.out_len; ++i) out[i] = va[i] >= vb[i] ? va[i] : vb[i];
        break;
      case PrimKind::SquaredLoss: {
        double acc = 0;
        int len = g.nodes()[n.a].out_len;
        for (int i = 0; i < len; ++i) {
          double d = va[i] - vb[i];
          acc += d * d;
        }
        out[0] = 0.5 * acc;
        break;
      }
      case PrimKind::Norm1: {
        double acc = 0;
        int len = g.nodes()[n.a].out_len;
        for (int i = 0; i < len; ++i) acc += std::abs(va[i]);
        out[0] = acc;
        break;
      }
      case PrimKind::AffineLayer: {
        const double* bias = va + n.rows * n.cols;
        for (int r = 0; r < n.rows; ++r) {
          double acc = bias[r];
          const double* row = va + r * n.cols;
          for (int c = 0; c < n.cols; ++c) acc += row[c] * vb[c];
          out[r] = acc;
        }
        break;
      }
    }
    for (int i = 0; i < n.out_len; ++i)
      if (!std::isfinite(out[i]))
        fail(ErrorCode::NonFiniteValue,
             std::string("non-finite value in ") + prim_name(n.kind));
  }
}

}  // namespace detail

inline double evaluate(const ExprGraph& g, std::span<const double> w,
                       std::span<const double> s, TapeWorkspace& ws) {
  detail::check_eval_args(g, w, s);
  detail::forward_pass(g, w, s, ws);
  return ws.values[g.nodes()[g.output()].val_offset];
}

inline double evaluate(const ExprGraph& g, const ParamVector& w, const Vec& s,
                       TapeWorkspace& ws) {
  return evaluate(g, w.span(), s, ws);
}

inline double evaluate(const ExprGraph& g, const ParamVector& w, const Vec& s) {
  TapeWorkspace ws;
  return evaluate(g, w.span(), s, ws);
}

/// Reverse sweep: accumulates the product of per-primitive Jacobian
/// selections in reverse composition order into grad (size w_dim). Returns
/// the forward value. At points where all primitives are differentiable
/// along the trace this is the classical gradient; at kinks the selection is
/// the policy's element of the Clarke Jacobian.
inline double eval_and_backprop(const ExprGraph& g, std::span<const double> w,
                                std::span<const double> s,
                                const SelectionPolicy& policy, TapeWorkspace& ws,
                                std::span<double> grad) {
  detail::check_eval_args(g, w, s);
  require(grad.size() == g.w_dim(), ErrorCode::DimensionMismatch, "grad size");
  policy.validate();
  detail::forward_pass(g, w, s, ws);

  ws.adjoints.assign(g.scalar_count(), 0.0);
  double* vals = ws.values.data();
  double* adj = ws.adjoints.data();
  std::fill(grad.begin(), grad.end(), 0.0);
  adj[g.nodes()[g.output()].val_offset] = 1.0;

  const auto& nodes = g.nodes();
  for (int idx = static_cast<int>(nodes.size()) - 1; idx >= 0; --idx) {
    const TapeNode& n = nodes[idx];
    const double* out_adj = adj + n.val_offset;
    double* aa = n.a >= 0 ? adj + nodes[n.a].val_offset : nullptr;
    double* ab = n.b >= 0 ? adj + nodes[n.b].val_offset : nullptr;
    const double* va = n.a >= 0 ? vals + nodes[n.a].val_offset : nullptr;
    const double* vb = n.b >= 0 ? vals + nodes[n.b].val_offset : nullptr;
    switch (n.kind) {
      case PrimKind::InputW:
        for (int i = 0; i < n.out_len; ++i) grad[n.offset + i] += out_adj[i];
        break;
      case PrimKind::InputS:
      case PrimKind::Const:
        break;
      case PrimKind::Add:
        for (int i = 0; i < n.out_len; ++i) {
          aa[i] += out_adj[i];
          ab[i] += out_adj[i];
        }
        break;
      case PrimKind::Sub:
        for (int i = 0; i < n.out_len; ++i) {
          aa[i] += out_adj[i];
          ab[i] -= out_adj[i];
        }
        break;
      case PrimKind::Mul:
        for (int i = 0; i < n.out_len; ++i) {
          aa[i] += out_adj[i] * vb[i];
          ab[i] += out_adj[i] * va[i];
        }
        break;
      case PrimKind::MatVec:
        for (int r = 0; r < n.rows; ++r) {
          double g_r = out_adj[r];
          double* arow = aa + r * n.cols;
          const double* row = va + r * n.cols;
          for (int c = 0; c < n.cols; ++c) {
            arow[c] += g_r * vb[c];
            ab[c] += g_r * row[c];
          }
        }
        break;
      case PrimKind::Dot: {
        int len = nodes[n.a].out_len;
        double gout = out_adj[0];
        for (int i = 0; i < len; ++i) {
          aa[i] += gout * vb[i];
          ab[i] += gout * va[i];
        }
        break;
      }
      case PrimKind::Abs:
        for (int i = 0; i < n.out_len; ++i) {
          double d = va[i] > 0 ? 1.0 : (va[i] < 0 ? -1.0 : policy.abs_at_zero);
          aa[i] += out_adj[i] * d;
        }
        break;
      case PrimKind::Relu:
        for (int i = 0; i < n.out_len; ++i) {
          double d = va[i] > 0 ? 1.0 : (va[i] < 0 ? 0.0 : policy.relu_at_zero);
          aa[i] += out_adj[i] * d;
        }
        break;
      case PrimKind::Max2:
        for (int i = 0; i < n.out_len; ++i) {
          if (va[i] > vb[i]) {
            aa[i] += out_adj[i];
          } else if (va[i] < vb[i]) {
            ab[i] += out_adj[i];
          } else {
            aa[i] += out_adj[i] * policy.max2_tie_first;
            ab[i] += out_adj[i] * (1.0 - policy.max2_tie_first);
          }
        }
        break;
      case PrimKind::SquaredLoss: {
        int len = nodes[n.a].out_len;
        double gout = out_adj[0];
        for (int i = 0; i < len; ++i) {
          double d = va[i] - vb[i];
          aa[i] += gout * d;
          ab[i] -= gout * d;
        }
        break;
      }
      case PrimKind::Norm1: {
        int len = nodes[n.a].out_len;
        double gout = out_adj[0];
        for (int i = 0; i < len; ++i) {
          double d = va[i] > 0 ? 1.0 : (va[i] < 0 ? -1.0 : policy.abs_at_zero);
          aa[i] += gout * d;
        }
        break;
      }
      case PrimKind::AffineLayer: {
        double* abias = aa + n.rows * n.cols;
        for (int r = 0; r < n.rows; ++r) {
          double g_r = out_adj[r];
          abias[r] += g_r;
          double* arow = aa + r * n.cols;
          const double* row = va + r * n.cols;
          for (int c = 0; c < n.cols; ++c) {
            arow[c] += g_r * vb[c];
            ab[c] += g_r * row[c];
          }
        }
        break;
      }
    }
  }
  for (double gi : grad)
    if (!std::isfinite(gi)) fail(ErrorCode::NonFiniteValue, "non-finite gradient");
  return vals[nodes[g.output()].val_offset];
}

inline ParamVector backprop(const ExprGraph& g, const ParamVector& w, const Vec& s,
                            const SelectionPolicy& policy = {}) {
  TapeWorkspace ws;
  Vec grad(g.w_dim());
  eval_and_backprop(g, w.span(), s, policy, ws, grad);
  return ParamVector(std::move(grad));
}

/// Central-difference gradient, error O(h^2) at C^2 points. Only trusted away
/// from kinks: at a kink it averages the one-sided slopes.
inline ParamVector fd_gradient(const ExprGraph& g, const ParamVector& w, const Vec& s,
                               double h = 0.0) {
  if (h == 0.0) h = 1e-6 * (1.0 + w.norm_inf());
  require(h > 0, ErrorCode::InvalidSpec, "fd step must be > 0");
  TapeWorkspace ws;
  Vec wp(w.coords());
  Vec grad(g.w_dim());
  for (std::size_t i = 0; i < g.w_dim(); ++i) {
    double orig = wp[i];
    wp[i] = orig + h;
    double fp = evaluate(g, wp, s, ws);
    wp[i] = orig - h;
    double fm = evaluate(g, wp, s, ws);
    wp[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return ParamVector(std::move(grad));
}

/// Smallest margin to a selection kink along the evaluation trace at (w, s):
/// |x_i| for Abs/Relu/Norm1 inputs, |a_i - b_i| for Max2. Infinity when the
/// trace meets no kinky primitive.
inline double kink_gap(const ExprGraph& g, std::span<const double> w,
                       std::span<const double> s, TapeWorkspace& ws) {
  detail::check_eval_args(g, w, s);
  detail::forward_pass(g, w, s, ws);
  double gap = std::numeric_limits<double>::infinity();
  const double* vals = ws.values.data();
  for (const TapeNode& n : g.nodes()) {
    const double* va = n.a >= 0 ? vals + g.nodes()[n.a].val_offset : nullptr;
    const double* vb = n.b >= 0 ? vals + g.nodes()[n.b].val_offset : nullptr;
    int len = n.a >= 0 ? g.nodes()[n.a].out_len : 0;
    switch (n.kind) {
      case PrimKind::Abs:
      case PrimKind::Relu:
      case PrimKind::Norm1:
        for (int i = 0; i < len; ++i) gap = std::min(gap, std::abs(va[i]));
        break;
      case PrimKind::Max2:
        for (int i = 0; i < len; ++i) gap = std::min(gap, std::abs(va[i] - vb[i]));
        break;
      default:
        break;
    }
  }
  return gap;
}

}  // namespace subgrad
