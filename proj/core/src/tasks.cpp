#include "cobt/tasks.hpp"

#include "cobt/error.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace cobt {

namespace {

using Eigen::Vector3d;

Pose7 at(const Vector3d& p) { return Pose7(p, Eigen::Quaterniond::Identity()); }
Pose7 at(double x, double y, double z) { return at(Vector3d(x, y, z)); }

Pose7 rotated(const Vector3d& p, const Vector3d& axis, double angle) {
  return Pose7(p, Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())));
}

DemoPhase move(const Pose7& target, double duration) { return {duration, target, std::nullopt}; }
DemoPhase grip(double g, double duration = 0.5) { return {duration, std::nullopt, g}; }
DemoPhase pause(double duration = 0.3) { return {duration, std::nullopt, std::nullopt}; }

WorldState base_world() {
  WorldState w;
  w.bounds = table_bounds();
  w.ee = home_pose();
  w.gripper = 0.0;
  return w;
}

TaskFixture make(std::string name, ObjectPoses objects, ObjectId target, ObjectId goal,
                 std::vector<DemoPhase> phases) {
  TaskFixture f;
  f.name = std::move(name);
  f.scene.world = base_world();
  f.scene.world.objects = std::move(objects);
  f.target = std::move(target);
  f.goal = std::move(goal);
  f.script.initial = f.scene.world;
  f.script.phases = std::move(phases);
  f.script.meta = {{"task", f.name}, {"target", f.target}, {"goal", f.goal}};
  return f;
}

// Reach from above, grasp, carry over the goal, lower, release, retract.
std::vector<DemoPhase> pnp_phases(const Vector3d& cube, const Pose7& place,
                                  const Vector3d& retract, double above = 0.12) {
  return {move(at(cube + Vector3d(0, 0, 0.1)), 1.2),
          move(at(cube), 0.8),
          pause(),
          grip(1.0),
          pause(),
          move(Pose7(place.position + Vector3d(0, 0, above), place.orientation), 1.5),
          move(place, 0.8),
          pause(),
          grip(0.0),
          pause(),
          move(Pose7(retract, place.orientation), 1.0),
          pause()};
}

}  // namespace

Pose7 home_pose() { return at(0.5, 0.0, 0.4); }

Bounds table_bounds() { return Bounds{Vector3d(-0.3, -0.6, 0.0), Vector3d(1.3, 0.6, 0.8)}; }

TaskFixture pick_and_place_fixture() {
  const Vector3d cube(0.35, -0.1, 0.025);
  const Vector3d tray(0.65, 0.1, 0.0);
  const Vector3d place = tray + Vector3d(0.08, 0.0, 0.025);
  auto f = make("pnp", {{"cube", at(cube)}, {"tray", at(tray)}}, "cube", "tray",
                pnp_phases(cube, at(place), tray + Vector3d(0, 0, 0.05)));
  f.scene.radius["tray"] = 0.1;
  return f;
}

TaskFixture insert_fixture() {
  const Vector3d cube(0.35, -0.1, 0.025);
  const Vector3d slot(0.65, 0.1, 0.0);
  const Vector3d place = slot + Vector3d(0, 0, 0.005);
  // The cube is turned a quarter turn about z while carried to line up with the slot.
  const Pose7 aligned = rotated(place, Vector3d::UnitZ(), M_PI / 2.0);
  auto phases = pnp_phases(cube, aligned, place + Vector3d(0, 0, 0.085));
  phases[6].duration = 1.2;  // slow insertion
  auto f = make("insert", {{"cube", at(cube)}, {"slot", at(slot)}}, "cube", "slot", phases);
  f.scene.radius["slot"] = 0.08;
  return f;
}

TaskFixture drawer_fixture() {
  const Vector3d set(0.3, 0.0, 0.0);
  const Vector3d handle = set + Vector3d(0.25, 0.0, 0.12);
  const Vector3d open = handle - Vector3d(0.2, 0.0, 0.0);
  auto f = make("drawer", {{"drawer_set", at(set)}, {"handle", at(handle)}}, "handle",
                "drawer_set",
                {move(at(handle), 1.5), pause(), grip(1.0), pause(), move(at(open), 1.5),
                 pause(), grip(0.0), pause(), move(at(open + Vector3d(-0.1, 0, 0.05)), 1.0),
                 pause()});
  f.scene.anchored_to["handle"] = "drawer_set";
  f.scene.radius["drawer_set"] = 0.3;
  // The drawer must stay reachable with its handle inside the workspace.
  f.scene.areas["drawer_set"] = Area{{0.4, 0.0}, {0.6, 0.4}};
  return f;
}

TaskFixture pouring_fixture() {
  const Vector3d cup_a(0.35, -0.1, 0.05);
  const Vector3d cup_b(0.65, 0.1, 0.05);
  const Vector3d pour = cup_b + Vector3d(-0.04, 0.0, 0.10);
  const Vector3d place = cup_b + Vector3d(-0.12, 0.0, 0.0);
  const double tilt = 1.2;
  auto f = make("pouring", {{"cup_a", at(cup_a)}, {"cup_b", at(cup_b)}}, "cup_a", "cup_b",
                {move(at(cup_a), 1.2), pause(), grip(1.0), pause(), move(at(pour), 1.5),
                 move(rotated(pour, Vector3d::UnitY(), tilt), 1.0), pause(0.5),
                 move(at(pour), 1.0), move(at(place), 1.2), pause(), grip(0.0), pause(),
                 move(at(place + Vector3d(0, 0, 0.1)), 1.0), pause()});
  f.scene.radius["cup_b"] = 0.08;
  return f;
}

std::vector<Eigen::Vector3d> kitting_slots() {
  return {Vector3d(0.08, -0.12, 0.025), Vector3d(0.08, 0.0, 0.025),
          Vector3d(0.08, 0.12, 0.025)};
}

TaskFixture kitting_piece_fixture(int i) {
  if (i < 0 || i > 2) throw ValidationError("world-sim", "kitting piece index out of range");
  const std::string id = "p" + std::to_string(i + 1);
  const Vector3d piece(0.35, -0.1, 0.025);
  const Vector3d tray(0.65, 0.05, 0.0);
  const Vector3d place = tray + kitting_slots()[1];
  auto f = make("kit_" + id, {{id, at(piece)}, {"tray", at(tray)}}, id, "tray",
                pnp_phases(piece, at(place), tray + Vector3d(0, 0, 0.05)));
  f.scene.radius["tray"] = 0.2;
  return f;
}

TaskFixture long_pick_and_place_fixture(double seconds) {
  TaskFixture f = pick_and_place_fixture();
  double total = 0.0;
  for (const auto& p : f.script.phases) total += p.duration;
  const double k = seconds / total;
  for (auto& p : f.script.phases) p.duration *= k;
  f.name = "pnp_long";
  f.script.meta["task"] = f.name;
  return f;
}

std::vector<std::string> fixture_names() {
  return {"pnp", "insert", "drawer", "pouring", "kit_p1", "kit_p2", "kit_p3", "pnp_long"};
}

TaskFixture fixture_by_name(const std::string& name) {
  if (name == "pnp") return pick_and_place_fixture();
  if (name == "insert") return insert_fixture();
  if (name == "drawer") return drawer_fixture();
  if (name == "pouring") return pouring_fixture();
  if (name == "kit_p1") return kitting_piece_fixture(0);
  if (name == "kit_p2") return kitting_piece_fixture(1);
  if (name == "kit_p3") return kitting_piece_fixture(2);
  if (name == "pnp_long") return long_pick_and_place_fixture();
  throw ValidationError("world-sim", "unknown fixture '" + name + "'");
}

CompositeFixture kitting_composite() {
  CompositeFixture c;
  c.name = "kitting";
  c.skills = {"kit_p1", "kit_p2", "kit_p3"};
  c.scene.world = base_world();
  c.scene.world.objects = {{"tray", at(0.75, 0.0, 0.0)},
                           {"p1", at(0.3, -0.25, 0.025)},
                           {"p2", at(0.3, 0.0, 0.025)},
                           {"p3", at(0.3, 0.25, 0.025)}};
  c.scene.radius["tray"] = 0.2;
  // Pieces start on the near side of the tray so later reaches never pass
  // over already placed pieces.
  c.scene.areas["tray"] = Area{{0.75, 0.0}, {0.2, 0.2}};
  c.scene.area = Area{{0.3, 0.0}, {0.3, 0.7}};
  return c;
}

CompositeFixture drawer_pnp_composite() {
  CompositeFixture c;
  c.name = "drawer_pnp";
  c.skills = {"drawer", "pnp"};
  c.scene.world = base_world();
  const Vector3d set(0.45, 0.1, 0.0);
  c.scene.world.objects = {{"drawer_set", at(set)},
                           {"handle", at(set + Vector3d(0.25, 0.0, 0.12))},
                           {"cube", at(0.35, -0.3, 0.025)}};
  c.scene.anchored_to["handle"] = "drawer_set";
  c.scene.radius["drawer_set"] = 0.3;
  c.scene.areas["drawer_set"] = Area{{0.5, 0.15}, {0.2, 0.1}};
  c.scene.areas["cube"] = Area{{0.45, -0.35}, {0.4, 0.1}};
  return c;
}

ObjectPoses composite_goal_scene(const std::string& name, const WorldState& world) {
  ObjectPoses g;
  if (name == "kitting") {
    const Pose7& tray = world.object("tray");
    g["tray"] = tray;
    const auto slots = kitting_slots();
    for (int i = 0; i < 3; ++i) {
      g["p" + std::to_string(i + 1)] = tray.compose(at(slots[static_cast<std::size_t>(i)]));
    }
    return g;
  }
  if (name == "drawer_pnp") {
    const Pose7& set = world.object("drawer_set");
    g["drawer_set"] = set;
    g["handle"] = set.compose(at(0.05, 0.0, 0.12));
    g["cube"] = set.compose(at(0.2, 0.0, 0.06));
    return g;
  }
  throw ValidationError("world-sim", "unknown composite '" + name + "'");
}

}  // namespace cobt
