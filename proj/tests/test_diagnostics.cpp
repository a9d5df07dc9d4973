#include <gtest/gtest.h>

#include <cmath>

#include "subgrad/diagnostics.hpp"
#include "subgrad/reports_json.hpp"

using namespace subgrad;

TEST(Criticality, AbsAtZeroIsExactlyCritical) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  std::vector<SelectionPolicy> policies;
  for (double s : {-1.0, 0.0, 1.0}) policies.push_back({.abs_at_zero = s});
  CriticalityReport rep = criticality_residual(p, ParamVector{0.0}, 100, policies,
                                               {91, 0});
  EXPECT_EQ(rep.residual, 0.0);
  EXPECT_EQ(rep.se_budget, 0.0);  // exact atom enumeration
  ASSERT_TRUE(rep.clarke_residual.has_value());
  EXPECT_EQ(*rep.clarke_residual, 0.0);
}

TEST(Criticality, SmoothAbsPointIsNotATrap) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  CriticalityReport rep = criticality_residual(p, ParamVector{0.3}, 1000,
                                               {SelectionPolicy{}}, {92, 0});
  EXPECT_LE(rep.residual, rep.se_budget);
  // and the recursion from 0.3 keeps moving: the applied selection is +-1
  RunConfig rc;
  rc.schedule = StepSchedule::constant(0.01);
  rc.w0 = ParamVector{0.3};
  rc.n_iters = 2;
  rc.rng = {92, 1};
  Trajectory traj = run_sgd(p, rc);
  EXPECT_EQ(std::abs(traj.records()[0].v[0]), 1.0);
  EXPECT_NE(traj.records()[1].w[0], 0.3);
}

TEST(Criticality, QuadraticResidualTracksGradientNorm) {
  Problem p = make_quadratic_problem(2);
  for (double a : {0.5, 1.0, 2.0}) {
    ParamVector w{a, -a};
    CriticalityReport rep = criticality_residual(p, w, 2000, {SelectionPolicy{}},
                                                 {93, 0});
    EXPECT_LE(std::abs(rep.residual - w.norm2()), rep.se_budget + 1e-9);
    EXPECT_NEAR(*rep.clarke_residual, w.norm2(), 1e-12);
  }
}

TEST(Criticality, RequiresMinimumSamples) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  EXPECT_THROW(
      criticality_residual(p, ParamVector{0.0}, 99, {SelectionPolicy{}}, {94, 0}),
      Error);
}

namespace {

Trajectory synthetic_trajectory(const std::vector<double>& ws, double alpha) {
  Trajectory t(1, 1);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    // v chosen so the recursion invariant holds exactly
    double next = k + 1 < ws.size() ? ws[k + 1] : ws[k];
    double v = (ws[k] - next) / alpha;
    t.append({k, ParamVector{ws[k]}, alpha, k, ParamVector{v}, 0.0});
  }
  t.finish(ParamVector{ws.back()}, ws.size(), RunStatus::Completed);
  return t;
}

}  // namespace

TEST(Occupation, ConstantTrajectoryHasFullMass) {
  std::vector<double> ws(1000, 0.7);
  Trajectory traj = synthetic_trajectory(ws, 0.01);
  OccupationReport rep = occupation_measure(traj, {0.05, 0.2});
  ASSERT_EQ(rep.centers.size(), 1u);
  EXPECT_DOUBLE_EQ(rep.centers[0][0], 0.7);
  for (const auto& per_radius : rep.masses)
    for (const auto& m : per_radius)
      for (double mass : m) EXPECT_DOUBLE_EQ(mass, 1.0);
}

TEST(Occupation, TwoClustersSplitTheMass) {
  std::vector<double> ws;
  for (int i = 0; i < 2000; ++i) ws.push_back(i % 2 == 0 ? 0.0 : 1.0);
  Trajectory traj = synthetic_trajectory(ws, 0.01);
  OccupationReport rep = occupation_measure(traj, {0.1});
  ASSERT_EQ(rep.centers.size(), 2u);
  for (const auto& per_radius : rep.masses)
    EXPECT_NEAR(per_radius[0][2], 0.5, 0.05);
}

TEST(Occupation, EarlyVisitorMassIsBounded) {
  // visits 5.0 during the first 1% of the alpha clock, then stays near 0
  std::vector<double> ws;
  for (int i = 0; i < 10; ++i) ws.push_back(5.0);
  for (int i = 0; i < 990; ++i) ws.push_back(0.0);
  Trajectory traj = synthetic_trajectory(ws, 0.01);
  ExactSum num = occupation_alpha_mass(traj, ParamVector{5.0}, 0.1, 1000);
  ExactSum den = occupation_total_alpha(traj, 1000);
  EXPECT_LE(num.value() / den.value(), 0.011);
}

TEST(Occupation, DisjointBallMassesSumBelowOneExactly) {
  // alpha values with awkward binary expansions, three disjoint balls
  std::vector<double> ws;
  for (int i = 0; i < 999; ++i) ws.push_back((i % 3) * 2.0);  // 0, 2, 4
  Trajectory traj = synthetic_trajectory(ws, 1.0 / 3.0);
  ExactSum den = occupation_total_alpha(traj, 999);
  ExactSum covered;
  for (double c : {0.0, 2.0, 4.0})
    covered.add_sum(occupation_alpha_mass(traj, ParamVector{c}, 0.5, 999));
  EXPECT_LE(covered.compare(den), 0);
  EXPECT_EQ(covered.compare(den), 0);  // the three balls cover everything here

  // drop one ball: strictly below
  ExactSum partial;
  for (double c : {0.0, 2.0})
    partial.add_sum(occupation_alpha_mass(traj, ParamVector{c}, 0.5, 999));
  EXPECT_LT(partial.compare(den), 0);
}

TEST(ChainRule, AbsProblemAlongCrossingSegment) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  auto curve = PiecewiseAffineCurve::segment(ParamVector{-1.0}, ParamVector{1.0});
  ChainRuleReport rep = validate_chain_rule(p, curve, 4000, 64, {}, {95, 0});
  EXPECT_TRUE(rep.pass) << "gap=" << rep.gap << " tol=" << rep.tol;
  EXPECT_NEAR(rep.lhs, 0.0, 1e-12);  // risk identically zero on atoms
}

TEST(ChainRule, QuadraticSegmentMatchesCalculus) {
  Problem p = make_quadratic_problem(2);
  ParamVector wa{0.2, -1.0}, wb{1.5, 0.5};
  auto curve = PiecewiseAffineCurve::segment(wa, wb);
  ChainRuleReport rep = validate_chain_rule(p, curve, 500, 64, {}, {96, 0});
  double expected = 0.5 * (wb.dot(wb) - wa.dot(wa));
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.lhs, expected, 1e-9);
  EXPECT_NEAR(rep.rhs, expected, 1e-3);
}

TEST(ChainRule, DistanceToCIsPathDifferentiable) {
  Problem p = make_distance_to_C_problem();
  auto curve = PiecewiseAffineCurve::segment(ParamVector{-1.0}, ParamVector{1.0});
  ChainRuleReport rep = validate_chain_rule(p, curve, 100000, 1, {}, {97, 0});
  EXPECT_LE(rep.gap, 1e-3) << "lhs=" << rep.lhs << " rhs=" << rep.rhs;
  EXPECT_TRUE(rep.pass);
}

TEST(Interchange, QuadraticDirectionalDerivative) {
  Problem p = make_quadratic_problem(2);
  ParamVector w{0.8, -0.3};
  InterchangeReport rep = interchange_check(p, w, ParamVector{1.0, 0.0}, 2000, {},
                                            {98, 0});
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.lhs, 0.8, 1e-9);
  EXPECT_NEAR(rep.rhs, 0.8, 1e-6);
}

TEST(Interchange, AbsSmoothPoint) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  InterchangeReport rep = interchange_check(p, ParamVector{0.5}, ParamVector{1.0}, 2000,
                                            {}, {99, 0});
  EXPECT_TRUE(rep.pass);
  EXPECT_NEAR(rep.lhs, 0.0, 1e-9);  // exact atoms: E[s] sign(w) = 0
}

TEST(Interchange, KinkIsDetected) {
  Problem p = make_abs_problem(AbsDist::Rademacher);
  try {
    interchange_check(p, ParamVector{0.0}, ParamVector{1.0}, 2000, {}, {100, 0});
    FAIL() << "expected KinkSuspected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::KinkSuspected);
  }
}

TEST(Semismoothness, AbsIsConsistent) {
  std::vector<double> y, g;
  for (int j = 1; j <= 100; ++j) {
    y.push_back(1.0 + 1.0 / j);
    g.push_back(1.0);
  }
  auto rep = semismoothness_residual([](double x) { return std::abs(x); }, 1.0, y, g);
  EXPECT_FALSE(rep.violated);
  for (double r : rep.residuals) EXPECT_EQ(r, 0.0);

  std::vector<double> y0, g0;
  for (int j = 1; j <= 100; ++j) {
    y0.push_back(1.0 / j);
    g0.push_back(1.0);
  }
  auto rep0 = semismoothness_residual([](double x) { return std::abs(x); }, 0.0, y0, g0);
  EXPECT_FALSE(rep0.violated);
  for (double r : rep0.residuals) EXPECT_EQ(r, 0.0);
}

TEST(Semismoothness, DistanceToCViolates) {
  std::vector<double> y, g;
  for (int j = 1; j <= 1000; ++j) {
    y.push_back(1.0 / j);
    g.push_back(-1.0);
  }
  auto rep = semismoothness_residual([](double x) { return distance_to_C(x); }, 0.0, y,
                                     g, 1e-6);
  EXPECT_TRUE(rep.violated);
  for (double r : rep.residuals) EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(ReportsJson, SchemasSerialize) {
  Problem p = make_quadratic_problem(2);
  CriticalityReport crit = criticality_residual(p, ParamVector{1.0, 0.0}, 500,
                                                {SelectionPolicy{}}, {101, 0});
  json jc = to_json(crit);
  EXPECT_EQ(jc.at("schema_version"), 1);
  EXPECT_EQ(jc.at("kind"), "criticality");
  EXPECT_TRUE(jc.contains("clarke_residual"));

  std::vector<double> ws(100, 0.5);
  Trajectory traj = synthetic_trajectory(ws, 0.01);
  json jo = to_json(occupation_measure(traj, {0.1}));
  EXPECT_EQ(jo.at("schema_version"), 1);
  EXPECT_EQ(jo.at("masses").size(), jo.at("centers").size());

  auto curve = PiecewiseAffineCurve::segment(ParamVector{0.0, 0.0}, ParamVector{1.0, 1.0});
  json jr = to_json(validate_chain_rule(p, curve, 200, 32, {}, {101, 1}));
  EXPECT_TRUE(jr.at("pass").get<bool>());
}

TEST(NoiseVerdictGating, Rules) {
  TailNoiseStats stats;
  stats.n_steps = 100000;
  stats.cauchy = {3.0, 2.0, 1.0};
  stats.windowed = {3.0, 2.0, 1.0};
  EXPECT_EQ(noise_extinction_check(stats, {true, true, true}), NoiseVerdict::Pass);
  EXPECT_EQ(noise_extinction_check(stats, {true, false, false}),
            NoiseVerdict::NotApplicable);
  stats.cauchy = {1.0, 2.0, 3.0};
  EXPECT_EQ(noise_extinction_check(stats, {true, true, true}), NoiseVerdict::Fail);
  stats.n_steps = 100;
  try {
    noise_extinction_check(stats, {true, true, true});
    FAIL() << "expected InsufficientData";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}
