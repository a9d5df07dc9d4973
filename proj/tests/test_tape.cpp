#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "subgrad/graph_json.hpp"
#include "subgrad/rng.hpp"
#include "subgrad/tape.hpp"

using namespace subgrad;

namespace {

std::shared_ptr<ExprGraph> abs_scaled_graph() {
  // s_0 * |w_0|
  auto g = std::make_shared<ExprGraph>(1, 1);
  int w = g->input_w(0, 1);
  int a = g->abs(w);
  int s = g->input_s(0, 1);
  g->set_output(g->mul(s, a));
  return g;
}

std::shared_ptr<ExprGraph> relu_identity_graph() {
  // relu(w_0) - relu(-w_0): the identity function of w_0
  auto g = std::make_shared<ExprGraph>(1, 0);
  int w = g->input_w(0, 1);
  int zero = g->constant({0.0});
  int neg = g->sub(zero, w);
  g->set_output(g->sub(g->relu(w), g->relu(neg)));
  return g;
}

}  // namespace

TEST(Evaluate, SpecExamples) {
  {
    ExprGraph g(1, 0);
    g.set_output(g.abs(g.input_w(0, 1)));
    EXPECT_DOUBLE_EQ(evaluate(g, ParamVector{-3.0}, {}), 3.0);
  }
  EXPECT_DOUBLE_EQ(evaluate(*abs_scaled_graph(), ParamVector{2.0}, {-1.0}), -2.0);
  {
    // 0.5 * (relu(w_0 * s_0) - s_1)^2 at w=1, s=(2,1): 0.5*(2-1)^2 = 0.5
    ExprGraph g(1, 2);
    int w = g.input_w(0, 1);
    int s0 = g.input_s(0, 1);
    int pred = g.relu(g.mul(w, s0));
    int target = g.input_s(1, 1);
    g.set_output(g.squared_loss(pred, target));
    EXPECT_DOUBLE_EQ(evaluate(g, ParamVector{1.0}, {2.0, 1.0}), 0.5);
  }
}

TEST(Evaluate, Errors) {
  auto g = abs_scaled_graph();
  try {
    evaluate(*g, ParamVector{1.0, 2.0}, {1.0});
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  // overflow to inf inside the graph
  ExprGraph big(1, 0);
  int w = big.input_w(0, 1);
  int c = big.constant({1e200});
  big.set_output(big.mul(big.mul(w, c), c));
  try {
    evaluate(big, ParamVector{1e200}, {});
    FAIL() << "expected NonFiniteValue";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteValue);
  }
}

TEST(Backprop, SpecExamples) {
  auto g = abs_scaled_graph();
  EXPECT_DOUBLE_EQ(backprop(*g, ParamVector{2.0}, {-1.0})[0], -1.0);
  EXPECT_DOUBLE_EQ(backprop(*g, ParamVector{0.0}, {1.0}, {.abs_at_zero = 0.0})[0], 0.0);

  // the backprop artifact: derivative of the identity comes out 0 at w = 0
  auto id = relu_identity_graph();
  EXPECT_DOUBLE_EQ(evaluate(*id, ParamVector{0.7}, {}), 0.7);
  EXPECT_DOUBLE_EQ(backprop(*id, ParamVector{0.7}, {})[0], 1.0);
  EXPECT_DOUBLE_EQ(backprop(*id, ParamVector{0.0}, {}, {.relu_at_zero = 0.0})[0], 0.0);
  // selection tau gives 2*tau, only tau = 1/2 repairs it
  EXPECT_DOUBLE_EQ(backprop(*id, ParamVector{0.0}, {}, {.relu_at_zero = 0.5})[0], 1.0);
}

TEST(Backprop, PolicyValidation) {
  auto g = abs_scaled_graph();
  EXPECT_THROW(backprop(*g, ParamVector{0.0}, {1.0}, {.abs_at_zero = 2.0}), Error);
  EXPECT_THROW(backprop(*g, ParamVector{0.0}, {1.0}, {.relu_at_zero = -0.5}), Error);
}

TEST(FdGradient, SpecExamples) {
  {
    ExprGraph g(1, 0);
    g.set_output(g.abs(g.input_w(0, 1)));
    EXPECT_NEAR(fd_gradient(g, ParamVector{1.0}, {}, 1e-5)[0], 1.0, 1e-9);
  }
  {
    // at a kink the central difference averages the one-sided slopes, which
    // is why fd is only trusted away from kinks
    ExprGraph g(1, 0);
    g.set_output(g.relu(g.input_w(0, 1)));
    EXPECT_DOUBLE_EQ(fd_gradient(g, ParamVector{0.0}, {}, 1e-5)[0], 0.5);
  }
  {
    ExprGraph g(2, 0);
    int w = g.input_w(0, 2);
    g.set_output(g.dot(w, w));
    ParamVector fd = fd_gradient(g, ParamVector{1.0, 2.0}, {}, 1e-5);
    EXPECT_NEAR(fd[0], 2.0, 1e-8);
    EXPECT_NEAR(fd[1], 4.0, 1e-8);
  }
}

namespace {

struct GraphCase {
  std::string name;
  std::shared_ptr<ExprGraph> graph;
};

// one graph per kinky or structural primitive, used by the property tests
std::vector<GraphCase> primitive_battery() {
  std::vector<GraphCase> cases;
  cases.push_back({"abs_scaled", abs_scaled_graph()});
  {
    auto g = std::make_shared<ExprGraph>(2, 2);
    int w = g->input_w(0, 2);
    int s = g->input_s(0, 2);
    g->set_output(g->dot(g->relu(w), s));
    cases.push_back({"relu_dot", g});
  }
  {
    auto g = std::make_shared<ExprGraph>(4, 2);
    int a = g->input_w(0, 2);
    int b = g->input_w(2, 2);
    int s = g->input_s(0, 2);
    g->set_output(g->dot(g->max2(a, b), s));
    cases.push_back({"max2_dot", g});
  }
  {
    auto g = std::make_shared<ExprGraph>(3, 0);
    int w = g->input_w(0, 3);
    g->set_output(g->norm1(w));
    cases.push_back({"norm1", g});
  }
  {
    // matvec + squared loss: w holds a 2x3 matrix, s = [x(3), y(2)]
    auto g = std::make_shared<ExprGraph>(6, 5);
    int m = g->input_w(0, 6);
    int x = g->input_s(0, 3);
    int y = g->input_s(3, 2);
    g->set_output(g->squared_loss(g->matvec(m, x, 2, 3), y));
    cases.push_back({"matvec_sqloss", g});
  }
  {
    // small relu network: affine(2->2), relu, affine(2->1), squared loss
    auto g = std::make_shared<ExprGraph>(9, 3);
    int x = g->input_s(0, 2);
    int p1 = g->input_w(0, 6);
    int h = g->relu(g->affine_layer(p1, x, 2, 2));
    int p2 = g->input_w(6, 3);
    int out = g->affine_layer(p2, h, 1, 2);
    int y = g->input_s(2, 1);
    g->set_output(g->squared_loss(out, y));
    cases.push_back({"relu_net", g});
  }
  {
    auto g = std::make_shared<ExprGraph>(2, 2);
    int w = g->input_w(0, 2);
    int s = g->input_s(0, 2);
    int prod = g->mul(w, s);
    int diff = g->sub(prod, w);
    g->set_output(g->dot(g->add(diff, s), s));
    cases.push_back({"smooth_arith", g});
  }
  return cases;
}

void random_point(SampleRng& rng, const ExprGraph& g, ParamVector& w, Vec& s) {
  Vec wv(g.w_dim());
  for (double& x : wv) x = rng.uniform(-2.0, 2.0);
  w = ParamVector(std::move(wv));
  s.resize(g.s_dim());
  for (double& x : s) x = rng.uniform(-2.0, 2.0);
}

}  // namespace

// At smooth points (trace margin > 1e-3 from every kink) backprop must match
// central differences: ||backprop - fd|| <= 1e-6 * (1 + ||fd||).
TEST(BackpropProperty, MatchesFdAwayFromKinks) {
  TapeWorkspace ws;
  for (const auto& [name, graph] : primitive_battery()) {
    SampleRng rng({1234, 1}, 0);
    std::size_t tested = 0, tries = 0;
    while (tested < 1000 && tries < 50000) {
      ++tries;
      ParamVector w;
      Vec s;
      random_point(rng, *graph, w, s);
      if (kink_gap(*graph, w.span(), s, ws) <= 1e-3) continue;
      ++tested;
      ParamVector bp = backprop(*graph, w, s);
      ParamVector fd = fd_gradient(*graph, w, s, 1e-6);
      double err = (bp - fd).norm2();
      ASSERT_LE(err, 1e-6 * (1.0 + fd.norm2())) << name << " at try " << tries;
    }
    ASSERT_EQ(tested, 1000u) << name << ": could not sample enough smooth points";
  }
}

// At a kink the output must lie in the hull of the one-sided limits, within
// 1e-6, for every admissible selection.
TEST(BackpropProperty, KinkMembership) {
  // abs kink at 0: limits -s and +s
  auto g_abs = abs_scaled_graph();
  for (double s0 : {1.0, -2.0, 0.7}) {
    Vec s{s0};
    double lo = std::min(-s0, s0), hi = std::max(-s0, s0);
    for (double sel : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
      double out = backprop(*g_abs, ParamVector{0.0}, s, {.abs_at_zero = sel})[0];
      EXPECT_GE(out, lo - 1e-6);
      EXPECT_LE(out, hi + 1e-6);
    }
  }
  // relu kink: limits 0 and s
  {
    ExprGraph g(1, 1);
    g.set_output(g.mul(g.relu(g.input_w(0, 1)), g.input_s(0, 1)));
    for (double sel : {0.0, 0.25, 1.0}) {
      double out = backprop(g, ParamVector{0.0}, {3.0}, {.relu_at_zero = sel})[0];
      EXPECT_GE(out, -1e-6);
      EXPECT_LE(out, 3.0 + 1e-6);
      EXPECT_NEAR(out, 3.0 * sel, 1e-12);
    }
  }
  // max2 tie: convex combination of the two branch gradients
  {
    ExprGraph g(2, 0);
    int a = g.input_w(0, 1);
    int b = g.input_w(1, 1);
    g.set_output(g.max2(a, b));
    for (double theta : {0.0, 0.5, 1.0}) {
      ParamVector out = backprop(g, ParamVector{1.5, 1.5}, {}, {.max2_tie_first = theta});
      EXPECT_NEAR(out[0], theta, 1e-12);
      EXPECT_NEAR(out[1], 1.0 - theta, 1e-12);
    }
  }
  // one-sided fd limits bracket the selection for the scaled abs
  auto g = abs_scaled_graph();
  double h = 1e-7;
  for (double s0 : {2.0, -1.0}) {
    TapeWorkspace ws;
    Vec s{s0};
    double fplus = evaluate(*g, ParamVector{h}, s, ws);
    double fminus = evaluate(*g, ParamVector{-h}, s, ws);
    double f0 = evaluate(*g, ParamVector{0.0}, s, ws);
    double slope_plus = (fplus - f0) / h;
    double slope_minus = (f0 - fminus) / h;
    double lo = std::min(slope_plus, slope_minus) - 1e-6;
    double hi = std::max(slope_plus, slope_minus) + 1e-6;
    double out = backprop(*g, ParamVector{0.0}, s, {.abs_at_zero = 0.6})[0];
    EXPECT_GE(out, lo);
    EXPECT_LE(out, hi);
  }
}

// Along any piecewise-affine curve, integrating <backprop, curve velocity>
// recovers the endpoint difference: the executable form of the chain rule.
TEST(BackpropProperty, ChainRuleAlongCurves) {
  TapeWorkspace ws;
  for (const auto& [name, graph] : primitive_battery()) {
    SampleRng rng({77, 2}, 0);
    for (int trial = 0; trial < 8; ++trial) {
      Vec s(graph->s_dim());
      for (double& x : s) x = rng.uniform(-2.0, 2.0);
      // three random breakpoints
      std::vector<ParamVector> knots;
      for (int j = 0; j < 3; ++j) {
        Vec wv(graph->w_dim());
        for (double& x : wv) x = rng.uniform(-2.0, 2.0);
        knots.push_back(ParamVector(std::move(wv)));
      }
      // uniform-grid trapezoid: kink crossings cost O(jump * dt) each, so the
      // grid must be fine for the 1e-4 relative tolerance
      const std::size_t n_quad = 100000;
      double integral = 0;
      Vec grad(graph->w_dim());
      double f_first = 0, f_last = 0;
      for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
        Vec vel(graph->w_dim());
        for (std::size_t c = 0; c < vel.size(); ++c)
          vel[c] = (knots[seg + 1][c] - knots[seg][c]) * 2.0;  // dt per segment = 0.5
        double dt = 0.5 / double(n_quad);
        for (std::size_t j = 0; j <= n_quad; ++j) {
          double frac = double(j) / double(n_quad);
          Vec x(graph->w_dim());
          for (std::size_t c = 0; c < x.size(); ++c)
            x[c] = knots[seg][c] + frac * (knots[seg + 1][c] - knots[seg][c]);
          double fval = eval_and_backprop(*graph, x, s, {}, ws, grad);
          double weight = (j == 0 || j == n_quad) ? dt / 2 : dt;
          integral += weight * dot(grad, vel);
          if (seg == 0 && j == 0) f_first = fval;
          if (seg + 2 == knots.size() && j == n_quad) f_last = fval;
        }
      }
      double lhs = f_last - f_first;
      EXPECT_LE(std::abs(lhs - integral), 1e-4 * (1.0 + std::abs(lhs)))
          << name << " trial " << trial;
    }
  }
}

TEST(GraphJson, ParsesAndEvaluates) {
  json spec = json::parse(R"({
    "w_dim": 1, "s_dim": 1,
    "nodes": [
      {"kind": "input_w", "offset": 0, "len": 1},
      {"kind": "abs", "in": [0]},
      {"kind": "input_s", "offset": 0, "len": 1},
      {"kind": "mul", "in": [2, 1]}
    ],
    "output": 3
  })");
  auto g = graph_from_json(spec);
  EXPECT_DOUBLE_EQ(evaluate(*g, ParamVector{2.0}, {-1.0}), -2.0);
  EXPECT_DOUBLE_EQ(backprop(*g, ParamVector{2.0}, {-1.0})[0], -1.0);
}

TEST(GraphJson, StrictKeysAndReferences) {
  auto expect_config_error = [](const char* text) {
    try {
      graph_from_json(json::parse(text));
      FAIL() << "expected ConfigError for " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    }
  };
  expect_config_error(R"({"w_dim":1,"s_dim":0,"typo":1,
    "nodes":[{"kind":"input_w","offset":0,"len":1}],"output":0})");
  expect_config_error(R"({"w_dim":1,"s_dim":0,
    "nodes":[{"kind":"input_w","offset":0,"len":1,"extra":2}],"output":0})");
  expect_config_error(R"({"w_dim":1,"s_dim":0,
    "nodes":[{"kind":"abs","in":[0]}],"output":0})");  // forward/self reference
  expect_config_error(R"({"w_dim":1,"s_dim":0,
    "nodes":[{"kind":"nope"}],"output":0})");
}
