#include "cobt/error.hpp"
#include "cobt/segmenter.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace cobt {
namespace {

using test::fixture_demo;

Demonstration linear_demo(std::size_t n, const Eigen::Vector3d& velocity) {
  Demonstration d;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 0.01 * static_cast<double>(i);
    d.samples.push_back({t, Pose7(Eigen::Vector3d(0.1, 0, 0.2) + velocity * t, {1, 0, 0, 0}), 0.0,
                         {{"cube", Pose7(0.5, 0, 0)}, {"tray", Pose7(0.7, 0, 0)}}});
  }
  return d;
}

TEST(Velocity, StationaryIsZero) {
  for (double v : velocity_norms(linear_demo(30, Eigen::Vector3d::Zero()))) EXPECT_EQ(v, 0.0);
}

TEST(Velocity, LinearMotionHasConstantSpeed) {
  const auto v = velocity_norms(linear_demo(30, {0.1, 0, 0}));
  ASSERT_EQ(v.size(), 30u);
  for (double s : v) EXPECT_NEAR(s, 0.1, 1e-9);
}

TEST(Velocity, NormCombinesComponents) {
  const auto v = velocity_norms(linear_demo(30, {0.003, 0.004, 0}));
  for (double s : v) EXPECT_NEAR(s, 0.005, 1e-9);
}

TEST(Velocity, EndpointsUseOneSidedDifferences) {
  Demonstration d = linear_demo(12, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = d.samples[i].t;
    d.samples[i].ee.position.x() = t * t;  // v = 2t
  }
  const auto v = velocity_norms(d);
  EXPECT_NEAR(v[0], (d.samples[1].ee.position.x() - d.samples[0].ee.position.x()) / 0.01, 1e-9);
  EXPECT_NEAR(v[5], 2.0 * d.samples[5].t, 1e-9);
  EXPECT_NEAR(v[11], (d.samples[11].ee.position.x() - d.samples[10].ee.position.x()) / 0.01, 1e-9);
}

TEST(Velocity, MovingAverageShrinksAtEdges) {
  const VelocityProfile v{0, 0, 3, 0, 0, 6};
  const auto m = moving_average(v, 3);
  EXPECT_NEAR(m[0], 0.0, 1e-12);
  EXPECT_NEAR(m[2], 1.0, 1e-12);
  EXPECT_NEAR(m[5], 3.0, 1e-12);
}

/// Two boundaries: the second one places ee, gripper and objects as given.
Demonstration two_frame(const Pose7& ee, double g, const ObjectPoses& objects) {
  Demonstration d;
  const ObjectPoses start{{"cube", Pose7(0.5, 0, 0)}, {"tray", Pose7(0.9, 0, 0)}};
  for (std::size_t i = 0; i < 11; ++i) {
    const double s = static_cast<double>(i) / 10.0;
    DemoSample smp;
    smp.t = 0.01 * static_cast<double>(i);
    smp.ee = Pose7(Eigen::Vector3d(0.2, 0.2, 0.3) * (1 - s) + ee.position * s, {1, 0, 0, 0});
    smp.gripper = i == 10 ? g : 0.0;
    smp.objects = i == 10 ? objects : start;
    d.samples.push_back(smp);
  }
  return d;
}

TEST(Grounding, EndEffectorNearUsesThreshold) {
  const ObjectPoses objs{{"cube", Pose7(0.03, 0, 0)}, {"tray", Pose7(0.9, 0, 0)}};
  const auto near = ground_states(two_frame(Pose7(0, 0, 0), 0.0, objs), {0, 10}, "cube", "tray");
  EXPECT_EQ(near[1].e, EndEffectorState::kNear);
  const ObjectPoses far{{"cube", Pose7(0.06, 0, 0)}, {"tray", Pose7(0.9, 0, 0)}};
  const auto no = ground_states(two_frame(Pose7(0, 0, 0), 0.0, far), {0, 10}, "cube", "tray");
  EXPECT_EQ(no[1].e, EndEffectorState::kNotNear);
}

TEST(Grounding, GripperIsBinarizedAtHalf) {
  const ObjectPoses objs{{"cube", Pose7(0.5, 0, 0)}, {"tray", Pose7(0.9, 0, 0)}};
  EXPECT_EQ(ground_states(two_frame(Pose7(0, 0, 0), 0.9, objs), {0, 10}, "cube", "tray")[1].g,
            GripperState::kClosed);
  EXPECT_EQ(ground_states(two_frame(Pose7(0, 0, 0), 0.4, objs), {0, 10}, "cube", "tray")[1].g,
            GripperState::kOpen);
}

TEST(Grounding, ObjectStates) {
  // The cube is carried next to a block (3 cm, approached), then to the tray
  // where the demonstration ends; the final sample defines the goal.
  Demonstration d;
  for (std::size_t i = 0; i < 15; ++i) {
    ObjectPoses o{{"cube", Pose7(0.5, 0, 0)}, {"block", Pose7(0.5, 0.3, 0)}, {"tray", Pose7(0.9, 0, 0)}};
    if (i >= 5) o["cube"] = Pose7(0.6, 0.0, 0);
    if (i >= 8) o["cube"] = Pose7(0.5, 0.27, 0);
    if (i >= 12) o["cube"] = Pose7(0.9, 0.02, 0);
    d.samples.push_back({0.01 * static_cast<double>(i), Pose7(0.2, 0.2, 0.3), 0.0, o});
  }
  const auto s = ground_states(d, {0, 5, 8, 14}, "cube", "tray");
  EXPECT_EQ(s[0].o, ObjectState::kNone);
  EXPECT_EQ(s[1].o, ObjectState::kNone);    // moved, but 30 cm from anything
  EXPECT_EQ(s[2].o, ObjectState::kNear);    // 3 cm from the block, distance decreased
  EXPECT_EQ(s[3].o, ObjectState::kOnGoal);  // at the demonstrated goal pose
  // Same 3 cm position without an approach is not Near.
  const auto still = ground_states(d, {0, 8, 9, 14}, "cube", "tray");
  EXPECT_EQ(still[2].o, ObjectState::kNone);
}

TEST(Grounding, UnknownTargetThrows) {
  const Demonstration& d = fixture_demo("pnp");
  EXPECT_THROW(ground_states(d, {0, d.size() - 1}, "nope", "tray"), ValidationError);
}

TEST(Grounding, IsPure) {
  const Demonstration& d = fixture_demo("drawer");
  const std::vector<std::size_t> b{0, 100, 200, 300, d.size() - 1};
  EXPECT_EQ(ground_states(d, b, "handle", "drawer_set"), ground_states(d, b, "handle", "drawer_set"));
}

TEST(Segment, DrawerFixtureHasFiveActions) {
  const Demonstration& d = fixture_demo("drawer");
  const SegmentedDataset seg = segment(d, "handle", "drawer_set");
  ASSERT_EQ(seg.boundaries.size(), 6u);
  EXPECT_EQ(seg.boundaries.front(), 0u);
  EXPECT_EQ(seg.boundaries.back(), d.size() - 1);
  EXPECT_EQ(seg.action_count(), 5u);

  // Second boundary: hand-computed from the recorded geometry.
  const auto& s = d.samples[seg.boundaries[1]];
  EXPECT_LT(pose_distance(s.ee, s.objects.at("handle")), 0.05);
  EXPECT_LT(s.gripper, 0.5);
  const SymbolicState expected{GripperState::kOpen, ObjectState::kNone, EndEffectorState::kNear};
  EXPECT_EQ(seg.states[1], expected);
}

TEST(Segment, PickAndPlaceFixture) {
  const SegmentedDataset seg = segment(fixture_demo("pnp"), "cube", "tray");
  // reach, grasp, carry+place, release, retract
  EXPECT_EQ(seg.action_count(), 5u);
}

TEST(Segment, StationaryDemoHasNoAction) {
  try {
    segment(linear_demo(50, Eigen::Vector3d::Zero()), "cube", "tray");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("no action detected"), std::string::npos);
  }
}

TEST(Segment, MissingObjectsThrow) {
  const Demonstration& d = fixture_demo("pnp");
  EXPECT_THROW(segment(d, "nope", "tray"), ValidationError);
  EXPECT_THROW(segment(d, "cube", "nope"), ValidationError);
}

TEST(Segment, AdjacentStatesDifferForEveryFixture) {
  for (const auto& name : fixture_names()) {
    const TaskFixture fx = fixture_by_name(name);
    const SegmentedDataset seg = segment(fixture_demo(name), fx.target, fx.goal);
    ASSERT_GE(seg.boundaries.size(), 2u) << name;
    ASSERT_EQ(seg.states.size(), seg.boundaries.size()) << name;
    for (std::size_t i = 1; i < seg.boundaries.size(); ++i) {
      EXPECT_LT(seg.boundaries[i - 1], seg.boundaries[i]) << name;
      EXPECT_NE(seg.states[i - 1], seg.states[i]) << name << " boundary " << i;
    }
  }
}

TEST(Filter, SpuriousBreakpointInsideReachIsRemoved) {
  const Demonstration& d = fixture_demo("drawer");
  const SegmentedDataset seg = segment(d, "handle", "drawer_set");
  std::vector<std::size_t> noisy = seg.boundaries;
  const std::size_t mid = (seg.boundaries[0] + seg.boundaries[1]) / 2;
  noisy.insert(noisy.begin() + 1, mid);
  const SegmentedDataset f = filter_segments(d, noisy, velocity_norms(d), "handle", "drawer_set");
  EXPECT_EQ(f.boundaries, seg.boundaries);
  EXPECT_EQ(f.states, seg.states);
}

TEST(Filter, EqualStatesMergeAndChangesAreKept) {
  // Constant-speed approach toward the cube: boundaries 0 and 10 share the
  // state (Open, None, NotNear); 40 is Near.
  Demonstration d;
  for (std::size_t i = 0; i <= 40; ++i) {
    const double t = 0.01 * static_cast<double>(i);
    d.samples.push_back({t, Pose7(0.1 + 0.01 * static_cast<double>(i), 0, 0.0), 0.0,
                         {{"cube", Pose7(0.5, 0, 0)}, {"tray", Pose7(0.9, 0.3, 0)}}});
  }
  const auto f = filter_segments(d, {0, 10, 40}, velocity_norms(d), "cube", "tray");
  EXPECT_EQ(f.boundaries, (std::vector<std::size_t>{0, 40}));
  EXPECT_EQ(f.states[0].e, EndEffectorState::kNotNear);
  EXPECT_EQ(f.states[1].e, EndEffectorState::kNear);
}

TEST(Filter, CollapseThrows) {
  const Demonstration d = linear_demo(30, {0.01, 0, 0});
  EXPECT_THROW(filter_segments(d, {0, 15, 29}, velocity_norms(d), "cube", "tray"), ValidationError);
}

TEST(Segment, JsonRoundTrip) {
  const SegmentedDataset seg = segment(fixture_demo("drawer"), "handle", "drawer_set");
  const auto j = to_json(seg);
  EXPECT_EQ(j.at("states").at(1), nlohmann::json::array({"Open", "None", "Near"}));
  const SegmentedDataset back = segmented_from_json(j);
  EXPECT_EQ(back.boundaries, seg.boundaries);
  EXPECT_EQ(back.states, seg.states);
  EXPECT_EQ(back.target_object, "handle");
}

TEST(Segment, GripperEventsSettleOnTheNewSide) {
  const Demonstration& d = fixture_demo("drawer");
  const auto events = gripper_events(d);
  ASSERT_EQ(events.size(), 2u);  // close, open
  for (const auto& e : events) {
    EXPECT_LE(e.crossing, e.settled);
    const bool closed = d.samples[e.crossing].gripper > 0.5;
    EXPECT_EQ(d.samples[e.settled].gripper > 0.5, closed);
  }
}

}  // namespace
}  // namespace cobt
