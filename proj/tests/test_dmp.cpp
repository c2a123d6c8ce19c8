#include "cobt/dmp.hpp"
#include "cobt/error.hpp"
#include "cobt/primitives.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace cobt {
namespace {

/// Minimum-jerk segment from a to b over `seconds` at 100 Hz, with the
/// orientation slerped from qa to qb.
std::vector<PoseSample> min_jerk_segment(const Pose7& a, const Pose7& b, double seconds) {
  const int n = static_cast<int>(std::lround(seconds * 100.0));
  std::vector<PoseSample> out;
  for (int i = 0; i <= n; ++i) {
    const double s = min_jerk(static_cast<double>(i) / n);
    out.push_back({0.01 * i,
                   Pose7(a.position + s * (b.position - a.position),
                         a.orientation.slerp(s, b.orientation)),
                   0.0});
  }
  return out;
}

double position_rmse(const Trajectory& r, std::span<const PoseSample> demo) {
  double sum = 0.0;
  for (std::size_t i = 0; i < demo.size(); ++i) {
    sum += (r[i].pose.position - demo[i].pose.position).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(demo.size()));
}

double orientation_rmse(const Trajectory& r, std::span<const PoseSample> demo) {
  double sum = 0.0;
  for (std::size_t i = 0; i < demo.size(); ++i) {
    const double a = angular_distance(r[i].pose.orientation, demo[i].pose.orientation);
    sum += a * a;
  }
  return std::sqrt(sum / static_cast<double>(demo.size()));
}

const Pose7 kStart(0.3, -0.1, 0.2);
const Pose7 kGoal(Eigen::Vector3d(0.6, 0.15, 0.05),
                  Eigen::Quaterniond(Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ())));

TEST(Dmp, ModelInvariants) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  EXPECT_GE(m.basis_count(), 10);
  EXPECT_GT(m.tau, 0.0);
  EXPECT_DOUBLE_EQ(m.alpha_z, 4.0 * m.beta_z);
  EXPECT_NEAR(m.tau, 1.0, 1e-12);
}

TEST(Dmp, StraightReachReproduction) {
  const auto seg = min_jerk_segment(kStart, kGoal, 1.0);
  const DmpModel m = train_dmp(seg);
  const Trajectory r = rollout(m, seg.front().pose, seg.back().pose);
  ASSERT_EQ(r.size(), seg.size());
  EXPECT_LT(position_rmse(r, seg), 0.005);
  EXPECT_LT(orientation_rmse(r, seg), 0.02);
}

TEST(Dmp, FixtureSegmentsReproduce) {
  for (const std::string name : {"pnp", "drawer", "insert", "pouring"}) {
    const auto& demo = test::fixture_demo(name);
    const auto& seg = test::learned(name).segments;
    for (std::size_t k = 0; k + 1 < seg.boundaries.size(); ++k) {
      const auto samples = segment_samples(demo, seg.boundaries[k], seg.boundaries[k + 1]);
      const DmpModel m = train_dmp(samples);
      const Trajectory r = rollout(m, samples.front().pose, samples.back().pose);
      ASSERT_EQ(r.size(), samples.size());
      EXPECT_LT(position_rmse(r, samples), 0.005) << name << " segment " << k;
      EXPECT_LT(orientation_rmse(r, samples), 0.02) << name << " segment " << k;
    }
  }
}

TEST(Dmp, ZeroLengthMotionStaysPut) {
  std::vector<PoseSample> seg;
  for (int i = 0; i <= 50; ++i) seg.push_back({0.01 * i, kStart, 0.0});
  const DmpModel m = train_dmp(seg);
  for (const auto& p : rollout(m, kStart, kStart)) {
    EXPECT_LT(pose_distance(p.pose, kStart), 0.001);
  }
}

TEST(Dmp, RejectsDegenerateSegments) {
  auto seg = min_jerk_segment(kStart, kGoal, 1.0);
  try {
    train_dmp(std::span<const PoseSample>(seg.data(), 3));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("segment too short"), std::string::npos);
  }
  std::vector<PoseSample> flat(8, seg.front());
  EXPECT_THROW(train_dmp(flat), ValidationError);
}

TEST(Dmp, GoalShiftConverges) {
  const auto seg = min_jerk_segment(kStart, kGoal, 1.0);
  const DmpModel m = train_dmp(seg);
  Pose7 goal = kGoal;
  goal.position.x() += 0.10;
  const Trajectory r = rollout(m, kStart, goal);
  EXPECT_LT(pose_distance(r.back().pose, goal), 0.001);
  EXPECT_LT(angular_distance(r.back().pose.orientation, goal.orientation), 0.01);
}

TEST(Dmp, RandomGoalsConverge) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> a(-M_PI, M_PI);
  for (int i = 0; i < 100; ++i) {
    const Pose7 start(u(rng), u(rng) - 0.5, u(rng));
    const Pose7 goal(Eigen::Vector3d(u(rng), u(rng) - 0.5, u(rng)),
                     Eigen::Quaterniond(Eigen::AngleAxisd(a(rng), Eigen::Vector3d::UnitZ())));
    const Trajectory r = rollout(m, start, goal);
    EXPECT_LT(pose_distance(r.back().pose, goal), 0.001) << "pair " << i;
    EXPECT_LT(angular_distance(r.back().pose.orientation, goal.orientation), 0.01) << "pair " << i;
  }
}

TEST(Dmp, TimeScaleStretchesDuration) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.2));
  const double dt = 0.01;
  const Trajectory r1 = rollout(m, kStart, kGoal, {1.0, dt, {}});
  const Trajectory r2 = rollout(m, kStart, kGoal, {2.0, dt, {}});
  EXPECT_NEAR(r1.back().t, m.tau, dt);
  EXPECT_NEAR(r2.back().t, 2.0 * m.tau, dt);
  // The stretched rollout passes the same poses at doubled times.
  for (std::size_t i = 0; i < r1.size(); i += 10) {
    EXPECT_LT(pose_distance(r1[i].pose, r2[2 * i].pose), 0.002);
  }
}

TEST(Dmp, StepRefinementIsConsistent) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  Pose7 goal = kGoal;
  goal.position += Eigen::Vector3d(-0.2, 0.1, 0.1);
  const Pose7 fine = rollout(m, kStart, goal, {2.0, 0.0005, {}}).back().pose;
  for (double dt : {0.02, 0.01, 0.005}) {
    const Pose7 coarse = rollout(m, kStart, goal, {2.0, dt, {}}).back().pose;
    const Pose7 half = rollout(m, kStart, goal, {2.0, dt / 2.0, {}}).back().pose;
    EXPECT_LT(pose_distance(coarse, half), 1e-4) << "dt " << dt;
    EXPECT_LT(pose_distance(coarse, fine), 1e-4) << "dt " << dt;
  }
}

TEST(Dmp, QuaternionsStayUnit) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  const Pose7 goal(Eigen::Vector3d(0.4, 0.2, 0.3),
                   Eigen::Quaterniond(Eigen::AngleAxisd(2.5, Eigen::Vector3d(1, 1, 0).normalized())));
  for (const auto& p : rollout(m, kStart, goal)) {
    EXPECT_NEAR(p.pose.orientation.norm(), 1.0, 1e-6);
  }
}

TEST(Dmp, ReverseTracesThePathBackward) {
  const auto seg = min_jerk_segment(kStart, kGoal, 1.0);
  std::vector<PoseSample> rev(seg.rbegin(), seg.rend());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i].t = seg[i].t;
  const DmpModel fwd = train_dmp(seg);
  const DmpModel back = train_dmp(rev);
  const Trajectory r = rollout(back, fwd.goal, fwd.start);
  ASSERT_EQ(r.size(), rev.size());
  EXPECT_LT(position_rmse(r, rev), 2 * 0.005);
  EXPECT_LT(pose_distance(back.goal, fwd.start), 1e-6);
  EXPECT_LT(pose_distance(back.start, fwd.goal), 1e-6);
}

TEST(Dmp, GripperReplaysProfileAndEndsAtDemonstratedValue) {
  auto seg = min_jerk_segment(kStart, kStart, 0.6);
  for (std::size_t i = 0; i < seg.size(); ++i) {
    seg[i].gripper = min_jerk(static_cast<double>(i) / static_cast<double>(seg.size() - 1));
  }
  const DmpModel m = train_dmp(seg);
  const Trajectory r = rollout(m, kStart, kStart, {2.0, 0.01, {}});
  EXPECT_NEAR(r.front().gripper, 0.0, 1e-9);
  EXPECT_NEAR(r.back().gripper, 1.0, 1e-9);
  EXPECT_NEAR(r[r.size() / 2].gripper, 0.5, 0.02);
  const Trajectory from_half = rollout(m, kStart, kStart, {1.0, 0.01, 0.5});
  EXPECT_NEAR(from_half.front().gripper, 0.5, 1e-9);
  EXPECT_NEAR(from_half.back().gripper, 1.0, 1e-9);
}

TEST(Dmp, JsonRoundTripRollsOutIdentically) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  const DmpModel back = dmp_from_json(nlohmann::json::parse(to_json(m).dump()));
  const Trajectory a = rollout(m, kStart, kGoal);
  const Trajectory b = rollout(back, kStart, kGoal);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(pose_distance(a[i].pose, b[i].pose), 1e-12);
}

TEST(Dmp, RejectsBadRolloutOptions) {
  const DmpModel m = train_dmp(min_jerk_segment(kStart, kGoal, 1.0));
  EXPECT_THROW(rollout(m, kStart, kGoal, {0.0, 0.01, {}}), ValidationError);
  EXPECT_THROW(rollout(m, kStart, kGoal, {1.0, 0.0, {}}), ValidationError);
}

}  // namespace
}  // namespace cobt
