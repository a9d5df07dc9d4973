#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "subgrad/core.hpp"
#include "subgrad/dynamics.hpp"
#include "subgrad/problems.hpp"
#include "subgrad/rng.hpp"
#include "subgrad/schedule.hpp"
#include "subgrad/trajectory.hpp"

using namespace subgrad;

TEST(Schedule, PowerLawFlags) {
  auto s1 = StepSchedule::power_law(1.0, 1.0);
  EXPECT_TRUE(s1.flags().sum_divergent);
  EXPECT_TRUE(s1.flags().square_summable);
  EXPECT_TRUE(s1.flags().little_o_log);

  auto s2 = StepSchedule::power_law(0.1, 0.7);
  EXPECT_EQ(s2.flags(), (ScheduleFlags{true, true, true}));

  auto s3 = StepSchedule::power_law(1.0, 0.4);
  EXPECT_EQ(s3.flags(), (ScheduleFlags{true, false, true}));

  auto c = StepSchedule::constant(0.1);
  EXPECT_EQ(c.flags(), (ScheduleFlags{true, false, false}));

  EXPECT_DOUBLE_EQ(s1.alpha(0), 1.0);
  EXPECT_DOUBLE_EQ(s1.alpha(9), 0.1);
  EXPECT_DOUBLE_EQ(c.alpha(123456), 0.1);
}

TEST(Schedule, Errors) {
  try {
    StepSchedule::power_law(-1.0, 1.0);
    FAIL() << "expected NonPositiveStep";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveStep);
  }
  try {
    StepSchedule::custom({0.1, -0.2}, {true, true, true});
    FAIL() << "expected NonPositiveStep";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveStep);
  }
  // declared square-summable but the partial sum of squares blows the bound
  std::vector<double> big(200000, 100.0);
  try {
    StepSchedule::custom(big, {true, true, false});
    FAIL() << "expected ContradictoryFlags";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContradictoryFlags);
  }
  // declared convergent sum but the partial sum blows the bound
  try {
    StepSchedule::custom(big, {false, false, false});
    FAIL() << "expected ContradictoryFlags";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContradictoryFlags);
  }
}

TEST(Schedule, CustomAccepted) {
  auto s = StepSchedule::custom({0.5, 0.25, 0.125}, {false, true, true});
  EXPECT_DOUBLE_EQ(s.alpha(2), 0.125);
  EXPECT_THROW(s.alpha(3), Error);
}

TEST(ParamVector, FiniteEnforced) {
  EXPECT_THROW(ParamVector({1.0, std::nan("")}), Error);
  ParamVector v{1.0, 2.0};
  ParamVector w{3.0, 4.0};
  EXPECT_DOUBLE_EQ((v + w)[1], 6.0);
  EXPECT_DOUBLE_EQ(v.dot(w), 11.0);
  EXPECT_THROW(v += ParamVector{1.0}, Error);  // dimension mismatch
}

TEST(ExactSum, CancellationAndCompare) {
  ExactSum s;
  s.add(1e16);
  s.add(1.0);
  s.add(-1e16);
  EXPECT_DOUBLE_EQ(s.value(), 1.0);

  ExactSum a, b;
  for (int i = 0; i < 1000; ++i) {
    a.add(0.1);
    b.add(0.1);
  }
  EXPECT_EQ(a.compare(b), 0);
  b.add(1e-30);
  EXPECT_LT(a.compare(b), 0);
}

TEST(PairwiseSum, MatchesPlainOnSmallAndIsDeterministic) {
  Vec xs;
  for (int i = 1; i <= 1000; ++i) xs.push_back(1.0 / i);
  double a = pairwise_sum(xs);
  double b = pairwise_sum(xs);
  EXPECT_EQ(a, b);
  double plain = 0;
  for (double x : xs) plain += x;
  EXPECT_NEAR(a, plain, 1e-12);
}

TEST(Rng, CounterDeterminism) {
  SampleRng r1({42, 7}, 13);
  SampleRng r2({42, 7}, 13);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r1.next_u64(), r2.next_u64());
  SampleRng other({42, 8}, 13);
  bool differs = false;
  SampleRng r3({42, 7}, 13);
  for (int i = 0; i < 10; ++i) differs |= other.next_u64() != r3.next_u64();
  EXPECT_TRUE(differs);
}

TEST(Trajectory, CsvRoundTripIsExact) {
  Problem prob = make_quadratic_problem(2);
  RunConfig rc;
  rc.schedule = StepSchedule::power_law(0.3, 0.6);
  rc.w0 = ParamVector{0.123456789012345, -1.5};
  rc.n_iters = 50;
  rc.rng = {5, 6};
  Trajectory traj = run_sgd(prob, rc);
  EXPECT_TRUE(traj.recursion_exact());

  std::stringstream ss;
  traj.to_csv(ss);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "k,alpha,sample_index,loss_sample,w_0,w_1,v_0,v_1");
  ss.seekg(0);

  Trajectory back = Trajectory::from_csv(ss);
  ASSERT_EQ(back.records().size(), traj.records().size());
  for (std::size_t i = 0; i < traj.records().size(); ++i) {
    EXPECT_EQ(back.records()[i].w, traj.records()[i].w);
    EXPECT_EQ(back.records()[i].v, traj.records()[i].v);
    EXPECT_EQ(back.records()[i].alpha, traj.records()[i].alpha);
    EXPECT_EQ(back.records()[i].loss_sample, traj.records()[i].loss_sample);
  }
  EXPECT_TRUE(back.recursion_exact());
}

TEST(Trajectory, RejectsGaps) {
  Trajectory t(1, 1);
  t.append({0, ParamVector{0.0}, 0.1, 0, ParamVector{1.0}, 0.0});
  TrajectoryRecord bad{2, ParamVector{0.0}, 0.1, 2, ParamVector{1.0}, 0.0};
  EXPECT_THROW(t.append(std::move(bad)), Error);
}
