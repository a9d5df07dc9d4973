#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "subgrad/core.hpp"
#include "subgrad/rng.hpp"
#include "subgrad/sampling.hpp"
#include "subgrad/tape.hpp"

namespace subgrad {

// ------------------------------------------------------------ closed forms

struct ClosedForm {
  std::function<double(const ParamVector&)> risk;
  // Distance from 0 to the risk's Clarke subdifferential at w.
  std::function<double(const ParamVector&)> clarke_dist0;
};

// ------------------------------------------------------------ Problem

/// An integrand f(w, s) with its sampling distribution, a conservative
/// oracle, and an optional closed-form risk. Graph-backed problems use the
/// tape; function-backed ones (distance to C) supply their own oracle.
class Problem {
 public:
  using EvalFn = std::function<double(std::span<const double>, std::span<const double>)>;
  using GradFn = std::function<void(std::span<const double>, std::span<const double>,
                                    const SelectionPolicy&, std::span<double>)>;
  using TransformFn = std::function<Vec(Vec)>;

  static Problem from_graph(std::string name, std::shared_ptr<const ExprGraph> graph,
                            DistributionSpec dist, TransformFn transform = nullptr,
                            std::optional<ClosedForm> closed_form = std::nullopt) {
    Problem p;
    p.name_ = std::move(name);
    p.graph_ = std::move(graph);
    p.w_dim_ = p.graph_->w_dim();
    p.s_dim_ = p.graph_->s_dim();
    p.dist_ = std::move(dist);
    p.transform_ = std::move(transform);
    p.closed_form_ = std::move(closed_form);
    p.check_dims();
    return p;
  }

  static Problem from_function(std::string name, std::size_t w_dim, std::size_t s_dim,
                               DistributionSpec dist, EvalFn eval, GradFn grad,
                               std::optional<ClosedForm> closed_form = std::nullopt) {
    Problem p;
    p.name_ = std::move(name);
    p.w_dim_ = w_dim;
    p.s_dim_ = s_dim;
    p.dist_ = std::move(dist);
    p.eval_fn_ = std::move(eval);
    p.grad_fn_ = std::move(grad);
    p.closed_form_ = std::move(closed_form);
    p.check_dims();
    return p;
  }

  const std::string& name() const { return name_; }
  std::size_t w_dim() const { return w_dim_; }
  std::size_t s_dim() const { return s_dim_; }
  const DistributionSpec& dist() const { return dist_; }
  const std::optional<ClosedForm>& closed_form() const { return closed_form_; }
  const std::shared_ptr<const ExprGraph>& graph() const { return graph_; }

  double eval(std::span<const double> w, std::span<const double> s,
              TapeWorkspace& ws) const {
    if (graph_) return evaluate(*graph_, w, s, ws);
    return eval_fn_(w, s);
  }

  double eval_backprop(std::span<const double> w, std::span<const double> s,
                       const SelectionPolicy& policy, TapeWorkspace& ws,
                       std::span<double> grad) const {
    if (graph_) return eval_and_backprop(*graph_, w, s, policy, ws, grad);
    grad_fn_(w, s, policy, grad);
    return eval_fn_(w, s);
  }

  /// Margin to the nearest selection kink along the trace; function-backed
  /// problems report the oracle's own notion via eval of the gap function.
  double kink_gap(std::span<const double> w, std::span<const double> s,
                  TapeWorkspace& ws) const {
    if (graph_) return subgrad::kink_gap(*graph_, w, s, ws);
    if (kink_gap_fn_) return kink_gap_fn_(w, s);
    return std::numeric_limits<double>::infinity();
  }

  void set_kink_gap_fn(EvalFn f) { kink_gap_fn_ = std::move(f); }

  Vec sample(RngSpec rng, std::uint64_t k, DrawStats* stats = nullptr) const {
    SampleRng r(rng, k);
    Vec raw = dist_.draw(r, stats);
    return transform_ ? transform_(std::move(raw)) : raw;
  }

  bool finite_atoms() const { return dist_.finite_atoms(); }

  std::vector<std::pair<Vec, double>> sample_atoms() const {
    require(finite_atoms(), ErrorCode::InvalidSpec, "distribution has no atoms");
    std::vector<std::pair<Vec, double>> out;
    for (std::size_t i = 0; i < dist_.atom_points().size(); ++i) {
      Vec s = dist_.atom_points()[i];
      if (transform_) s = transform_(std::move(s));
      out.emplace_back(std::move(s), dist_.atom_weights()[i]);
    }
    return out;
  }

  /// Monte-Carlo risk with deterministic pairwise reduction. On finite-atom
  /// distributions the exact weighted enumeration is used instead and se is
  /// zero.
  double risk_estimate(const ParamVector& w, std::size_t n_samples, RngSpec rng,
                       double* se_out = nullptr) const {
    TapeWorkspace ws;
    if (finite_atoms()) {
      double j = 0;
      for (const auto& [s, weight] : sample_atoms()) j += weight * eval(w.span(), s, ws);
      if (se_out) *se_out = 0.0;
      return j;
    }
    Vec vals(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
      vals[i] = eval(w.span(), sample(rng, i), ws);
    double mean = pairwise_mean(vals);
    if (se_out) {
      double ss = 0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      *se_out = n_samples > 1 ? std::sqrt(ss / (double(n_samples) * double(n_samples - 1)))
                              : 0.0;
    }
    return mean;
  }

 private:
  void check_dims() const {
    std::size_t raw_dim = dist_.dim();
    require(transform_ ? raw_dim <= s_dim_ : raw_dim == s_dim_,
            ErrorCode::DimensionMismatch, "distribution/sample dimension mismatch");
  }

  std::string name_;
  std::size_t w_dim_ = 0, s_dim_ = 0;
  DistributionSpec dist_ = DistributionSpec::rademacher();
  TransformFn transform_;
  std::shared_ptr<const ExprGraph> graph_;
  EvalFn eval_fn_;
  GradFn grad_fn_;
  EvalFn kink_gap_fn_;
  std::optional<ClosedForm> closed_form_;
};

// ------------------------------------------------------------ abs problem

enum class AbsDist { Rademacher, Uniform };

/// f(w, s) = s * |w|. The risk is identically 0, yet the expected sampled
/// subdifferential at w = 0 is the full interval [-1, 1]: the canonical
/// artificial critical point.
inline Problem make_abs_problem(AbsDist dist_kind = AbsDist::Rademacher) {
  auto g = std::make_shared<ExprGraph>(1, 1);
  int w = g->input_w(0, 1);
  int a = g->abs(w);
  int s = g->input_s(0, 1);
  g->set_output(g->mul(s, a));
  DistributionSpec dist = dist_kind == AbsDist::Rademacher
                              ? DistributionSpec::rademacher()
                              : DistributionSpec::uniform_box({-1.0}, {1.0});
  ClosedForm cf;
  cf.risk = [](const ParamVector&) { return 0.0; };
  cf.clarke_dist0 = [](const ParamVector&) { return 0.0; };
  return Problem::from_graph(
      dist_kind == AbsDist::Rademacher ? "abs_rademacher" : "abs_uniform",
      std::move(g), std::move(dist), nullptr, cf);
}

// ------------------------------------------------------------ quadratic

/// f(w, s) = 0.5*||w||^2 + <w, s> with E[s] = 0, so the risk is exactly
/// 0.5*||w||^2 while single-sample gradients stay noisy.
inline Problem make_quadratic_problem(std::size_t p = 2) {
  auto g = std::make_shared<ExprGraph>(p, p);
  int w = g->input_w(0, static_cast<int>(p));
  int s = g->input_s(0, static_cast<int>(p));
  int sq = g->dot(w, w);
  int half = g->constant({0.5});
  int t1 = g->mul(sq, half);
  int t2 = g->dot(w, s);
  g->set_output(g->add(t1, t2));

  std::vector<Vec> atoms;
  std::vector<double> weights;
  for (std::size_t mask = 0; mask < (std::size_t{1} << p); ++mask) {
    Vec a(p);
    for (std::size_t i = 0; i < p; ++i) a[i] = (mask >> i) & 1 ? 1.0 : -1.0;
    atoms.push_back(std::move(a));
    weights.push_back(1.0 / double(std::size_t{1} << p));
  }
  ClosedForm cf;
  cf.risk = [](const ParamVector& w_) { return 0.5 * w_.dot(w_); };
  cf.clarke_dist0 = [](const ParamVector& w_) { return w_.norm2(); };
  return Problem::from_graph("quadratic" + std::to_string(p), std::move(g),
                             DistributionSpec::discrete_atoms(atoms, weights), nullptr,
                             cf);
}

// ------------------------------------------------------------ networks

enum class LossKind { SquaredLoss, Norm1 };

struct NetworkSpec {
  std::vector<int> layer_dims;  // p_0 .. p_L
  LossKind loss = LossKind::SquaredLoss;

  void validate() const {
    require(layer_dims.size() >= 2, ErrorCode::InvalidSpec,
            "network needs at least input and output dims");
    for (int d : layer_dims)
      require(d >= 1, ErrorCode::InvalidSpec, "layer dims must be >= 1");
  }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_dims.size(); ++l)
      n += std::size_t(layer_dims[l]) * (layer_dims[l - 1] + 1);
    return n;
  }
  int in_dim() const { return layer_dims.front(); }
  int out_dim() const { return layer_dims.back(); }
};

/// Plain forward pass x^(l) = g_l(w^(l), x^(l-1)), relu on hidden layers,
/// affine last. Used for teacher labels, independently of the tape.
inline Vec network_forward(const NetworkSpec& spec, std::span<const double> w,
                           std::span<const double> x) {
  Vec cur(x.begin(), x.end());
  std::size_t off = 0;
  std::size_t layers = spec.layer_dims.size() - 1;
  for (std::size_t l = 1; l <= layers; ++l) {
    int rows = spec.layer_dims[l];
    int cols = spec.layer_dims[l - 1];
    Vec next(rows);
    const double* mat = w.data() + off;
    const double* bias = mat + std::size_t(rows) * cols;
    for (int r = 0; r < rows; ++r) {
      double acc = bias[r];
      for (int c = 0; c < cols; ++c) acc += mat[std::size_t(r) * cols + c] * cur[c];
      next[r] = l < layers && acc < 0 ? 0.0 : acc;
    }
    cur = std::move(next);
    off += std::size_t(rows) * (cols + 1);
  }
  return cur;
}

inline std::shared_ptr<ExprGraph> build_network_graph(const NetworkSpec& spec) {
  spec.validate();
  std::size_t w_dim = spec.param_count();
  std::size_t s_dim = std::size_t(spec.in_dim()) + spec.out_dim();
  auto g = std::make_shared<ExprGraph>(w_dim, s_dim);
  int x = g->input_s(0, spec.in_dim());
  int off = 0;
  std::size_t layers = spec.layer_dims.size() - 1;
  for (std::size_t l = 1; l <= layers; ++l) {
    int rows = spec.layer_dims[l];
    int cols = spec.layer_dims[l - 1];
    int params = g->input_w(off, rows * (cols + 1));
    x = g->affine_layer(params, x, rows, cols);
    if (l < layers) x = g->relu(x);
    off += rows * (cols + 1);
  }
  int y = g->input_s(spec.in_dim(), spec.out_dim());
  if (spec.loss == LossKind::SquaredLoss) {
    g->set_output(g->squared_loss(x, y));
  } else {
    g->set_output(g->norm1(g->sub(x, y)));
  }
  return g;
}

/// Teacher-student regression: inputs from dist_x (compact support), labels
/// from a fixed teacher network, so the optimum and optimal risk are known by
/// construction.
inline Problem make_network_problem(const NetworkSpec& spec, ParamVector teacher_w,
                                    DistributionSpec dist_x, std::string name,
                                    std::optional<ClosedForm> closed_form = std::nullopt) {
  spec.validate();
  require(teacher_w.size() == spec.param_count(), ErrorCode::InvalidSpec,
          "teacher parameter count mismatch");
  require(dist_x.dim() == std::size_t(spec.in_dim()), ErrorCode::InvalidSpec,
          "input distribution dimension mismatch");
  auto g = build_network_graph(spec);
  auto transform = [spec, teacher_w](Vec x) {
    Vec y = network_forward(spec, teacher_w.span(), x);
    x.insert(x.end(), y.begin(), y.end());
    return x;
  };
  return Problem::from_graph(std::move(name), std::move(g), std::move(dist_x),
                             transform, std::move(closed_form));
}

inline ParamVector random_teacher(const NetworkSpec& spec, RngSpec seed) {
  SampleRng r(seed, 0);
  Vec w(spec.param_count());
  for (double& x : w) x = r.uniform(-1.0, 1.0);
  return ParamVector(std::move(w));
}

inline Problem make_teacher_problem(const NetworkSpec& spec, RngSpec teacher_seed,
                                    DistributionSpec dist_x, std::string name) {
  return make_network_problem(spec, random_teacher(spec, teacher_seed),
                              std::move(dist_x), std::move(name));
}

/// [1,1] affine net, teacher y = 2x, x ~ Uniform[-1,1]. The risk is the
/// polynomial ((w-2)^2/3 + b^2)/2.
inline Problem make_affine1d_problem() {
  NetworkSpec spec{{1, 1}, LossKind::SquaredLoss};
  ClosedForm cf;
  cf.risk = [](const ParamVector& w) {
    return 0.5 * ((w[0] - 2.0) * (w[0] - 2.0) / 3.0 + w[1] * w[1]);
  };
  cf.clarke_dist0 = [](const ParamVector& w) {
    double gw = (w[0] - 2.0) / 3.0;
    return std::sqrt(gw * gw + w[1] * w[1]);
  };
  return make_network_problem(spec, ParamVector{2.0, 0.0},
                              DistributionSpec::uniform_box({-1.0}, {1.0}),
                              "affine1d", cf);
}

/// h(w, x) = (relu(w) - relu(-w)) * x fit to y = x: the predictor is the
/// identity in w, but backprop with the default relu selection outputs 0 at
/// w = 0, freezing the recursion at a point where the risk slope is -3/4.
inline Problem make_identity_relu_problem() {
  auto g = std::make_shared<ExprGraph>(1, 2);
  int w = g->input_w(0, 1);
  int zero = g->constant({0.0});
  int neg_w = g->sub(zero, w);
  int psi = g->sub(g->relu(w), g->relu(neg_w));
  int x = g->input_s(0, 1);
  int pred = g->mul(psi, x);
  int y = g->input_s(1, 1);
  g->set_output(g->squared_loss(pred, y));

  auto transform = [](Vec x_) {
    x_.push_back(x_[0]);  // y = x
    return x_;
  };
  // E[x^2] = 0.75 for x ~ Uniform[-1.5, 1.5]
  ClosedForm cf;
  cf.risk = [](const ParamVector& w_) {
    return 0.375 * (w_[0] - 1.0) * (w_[0] - 1.0);
  };
  cf.clarke_dist0 = [](const ParamVector& w_) { return std::abs(0.75 * (w_[0] - 1.0)); };
  return Problem::from_graph("identity_relu", std::move(g),
                             DistributionSpec::uniform_box({-1.5}, {1.5}), transform,
                             cf);
}

// ------------------------------------------------------------ distance to C

// C = {1/k | k integer, k != 0} union {0}, truncated to |k| <= kCIndexMax.
// Nearest-point search is index arithmetic, never enumeration.
constexpr double kCIndexMax = 1e6;

inline double distance_to_C(double x) {
  double ax = std::abs(x);
  if (ax >= 1.0) return ax - 1.0;
  if (ax < 1.0 / kCIndexMax) return std::min(ax, 1.0 / kCIndexMax - ax);
  double k0 = std::floor(1.0 / ax);
  double best = ax;  // distance to 0, never optimal here but a safe start
  for (double k : {k0 - 1.0, k0, k0 + 1.0}) {
    if (k < 1.0 || k > kCIndexMax) continue;
    best = std::min(best, std::abs(ax - 1.0 / k));
  }
  return best;
}

/// One element of a conservative gradient of distance_to_C: slope of the
/// distance off the kink set, kink_selection (in [-1,1]) on it.
inline double distance_to_C_slope(double x, double kink_selection = 0.0) {
  double ax = std::abs(x);
  double sgn = x >= 0 ? 1.0 : -1.0;
  if (ax >= 1.0) return ax == 1.0 ? kink_selection : sgn;
  double lo_c, hi_c;  // neighbours of ax among {0} U {1/k}
  if (ax < 1.0 / kCIndexMax) {
    lo_c = 0.0;
    hi_c = 1.0 / kCIndexMax;
  } else {
    double k0 = std::floor(1.0 / ax);
    lo_c = 0.0;
    hi_c = 1.0;
    for (double k : {k0 - 1.0, k0, k0 + 1.0}) {
      if (k < 1.0 || k > kCIndexMax) continue;
      double c = 1.0 / k;
      if (c <= ax) lo_c = std::max(lo_c, c);
      if (c >= ax) hi_c = std::min(hi_c, c);
    }
  }
  if (ax == lo_c || ax == hi_c) return kink_selection;  // on C
  double d_lo = ax - lo_c, d_hi = hi_c - ax;
  if (d_lo == d_hi) return kink_selection;  // midpoint kink
  return d_lo < d_hi ? sgn : -sgn;
}

inline Problem make_distance_to_C_problem() {
  auto eval = [](std::span<const double> w, std::span<const double>) {
    return distance_to_C(w[0]);
  };
  auto grad = [](std::span<const double> w, std::span<const double>,
                 const SelectionPolicy& policy, std::span<double> g) {
    g[0] = distance_to_C_slope(w[0], policy.abs_at_zero);
  };
  ClosedForm cf;
  cf.risk = [](const ParamVector& w) { return distance_to_C(w[0]); };
  cf.clarke_dist0 = [](const ParamVector& w) {
    // [-1,1] at kinks (contains 0), {+-1} elsewhere
    double s_plus = distance_to_C_slope(w[0], 0.5);
    double s_minus = distance_to_C_slope(w[0], -0.5);
    return s_plus == s_minus ? 1.0 : 0.0;
  };
  Problem p = Problem::from_function("distance_to_c", 1, 1,
                                     DistributionSpec::discrete_atoms({{0.0}}, {1.0}),
                                     eval, grad, cf);
  p.set_kink_gap_fn([](std::span<const double> w, std::span<const double>) {
    double ax = std::abs(w[0]);
    double d = distance_to_C(ax);
    if (ax >= 1.0) return d;
    // gap to the nearest of: C itself and the midpoints between neighbours
    double k0 = ax < 1.0 / kCIndexMax ? kCIndexMax : std::floor(1.0 / ax);
    double gap = d;
    for (double k : {k0 - 1.0, k0, k0 + 1.0}) {
      if (k < 1.0 || k + 1.0 > kCIndexMax) continue;
      double mid = 0.5 * (1.0 / k + 1.0 / (k + 1.0));
      gap = std::min(gap, std::abs(ax - mid));
    }
    if (ax < 1.0 / kCIndexMax)  // midpoint of the truncated gap at 0
      gap = std::min(gap, std::abs(ax - 0.5 / kCIndexMax));
    return gap;
  });
  return p;
}

// ------------------------------------------------------------ registry

/// Closed-form problems verify themselves against Monte Carlo on
/// registration: 1e5 samples, 20 random points, 4-standard-error budget.
inline void self_check_closed_form(const Problem& p, RngSpec rng,
                                   std::size_t n_samples = 100000,
                                   std::size_t n_points = 20) {
  if (!p.closed_form()) return;
  SampleRng wgen(rng, 0);
  for (std::size_t t = 0; t < n_points; ++t) {
    Vec w(p.w_dim());
    for (double& x : w) x = wgen.uniform(-2.0, 2.0);
    ParamVector wp(std::move(w));
    double se = 0;
    double mc = p.risk_estimate(wp, n_samples, rng.substream(1 + t), &se);
    double j = p.closed_form()->risk(wp);
    if (std::abs(mc - j) > 4.0 * se + 1e-9)
      fail(ErrorCode::SelfCheckFailed,
           p.name() + ": closed-form risk " + std::to_string(j) +
               " vs MC " + std::to_string(mc) + " (se " + std::to_string(se) + ")");
  }
}

class ProblemRegistry {
 public:
  void add(Problem p, bool self_check = true, RngSpec check_rng = {9001, 3}) {
    if (self_check) self_check_closed_form(p, check_rng);
    problems_.push_back(std::move(p));
  }

  const Problem& by_name(const std::string& name) const {
    for (const auto& p : problems_)
      if (p.name() == name) return p;
    fail(ErrorCode::ConfigError, "unknown problem: " + name);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : problems_) out.push_back(p.name());
    return out;
  }

  const std::vector<Problem>& all() const { return problems_; }

 private:
  std::vector<Problem> problems_;
};

inline ProblemRegistry builtin_problems(bool self_check = true) {
  ProblemRegistry reg;
  reg.add(make_abs_problem(AbsDist::Rademacher), self_check);
  reg.add(make_abs_problem(AbsDist::Uniform), self_check);
  reg.add(make_quadratic_problem(2), self_check);
  reg.add(make_affine1d_problem(), self_check);
  reg.add(make_teacher_problem(
              NetworkSpec{{2, 3, 1}, LossKind::SquaredLoss}, RngSpec{42, 1000},
              DistributionSpec::truncated_gaussian(0.0, 1.0, {-2.0, -2.0}, {2.0, 2.0}),
              "teacher_2_3_1"),
          self_check);
  reg.add(make_identity_relu_problem(), self_check);
  reg.add(make_distance_to_C_problem(), self_check);
  return reg;
}

}  // namespace subgrad
