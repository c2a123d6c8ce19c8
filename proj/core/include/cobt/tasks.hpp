#pragma once

#include "cobt/world.hpp"

#include <string>
#include <vector>

namespace cobt {

/// A scripted demonstration together with the scene it runs in.
struct TaskFixture {
  std::string name;
  Scene scene;
  DemoScript script;
  ObjectId target;
  ObjectId goal;

  Demonstration demo() const { return synth_demo(script); }
};

/// Home pose shared by all fixtures.
Pose7 home_pose();
Bounds table_bounds();

TaskFixture pick_and_place_fixture();
TaskFixture insert_fixture();
TaskFixture drawer_fixture();
TaskFixture pouring_fixture();
/// P&P of piece p{i+1}, i in [0, 3), onto the tray's centre slot.
TaskFixture kitting_piece_fixture(int i);
/// P&P stretched to `seconds` of demonstration time.
TaskFixture long_pick_and_place_fixture(double seconds = 30.0);

/// Names accepted by fixture_by_name.
std::vector<std::string> fixture_names();
TaskFixture fixture_by_name(const std::string& name);

/// Kitting tray slot offsets in the tray frame.
std::vector<Eigen::Vector3d> kitting_slots();

/// Composite scenes: the live scene to randomize and a goal arrangement
/// built from the live poses of the anchors.
struct CompositeFixture {
  std::string name;
  Scene scene;
  std::vector<std::string> skills;
};
CompositeFixture kitting_composite();
CompositeFixture drawer_pnp_composite();
/// Desired arrangement for a (randomized) composite world.
ObjectPoses composite_goal_scene(const std::string& name, const WorldState& world);

}  // namespace cobt
