#pragma once

#include "cobt/demo.hpp"
#include "cobt/pose.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cobt {

inline constexpr double kGripperMaxRate = 5.0;      // per second
inline constexpr double kGraspRadius = 0.05;        // meters
inline constexpr double kDefaultObjectRadius = 0.05;
inline constexpr int kMaxSceneDraws = 1000;

struct Bounds {
  Eigen::Vector3d min{-0.3, -0.6, 0.0};
  Eigen::Vector3d max{1.3, 0.6, 0.8};

  bool contains(const Eigen::Vector3d& p) const;
  Eigen::Vector3d clamp(const Eigen::Vector3d& p) const;
  bool operator==(const Bounds&) const = default;
};

struct Attachment {
  ObjectId object;
  Pose7 grasp;  // object pose in the ee frame
  bool operator==(const Attachment&) const = default;
};

/// Kinematic world: free-flying end-effector, pose-only objects and at most
/// one rigidly attached object (pose = ee * grasp).
struct WorldState {
  ObjectPoses objects;
  Pose7 ee;
  double gripper = 0.0;
  std::optional<Attachment> attachment;
  Bounds bounds;
  double time = 0.0;
  /// Gripper side of 0.5 seen by the last try_grasp; crossings are edges on it.
  bool latched_closed = false;

  bool has_object(const ObjectId& id) const { return objects.count(id) != 0; }
  const Pose7& object(const ObjectId& id) const;
  bool operator==(const WorldState&) const = default;
};

/// Moves the ee to the clamped target, slews the gripper, resolves grasping
/// and re-applies the attachment. dt must be > 0.
WorldState step(const WorldState& world, const Pose7& ee_target, double gripper_target, double dt);

/// Upward 0.5 crossing attaches the nearest object within kGraspRadius;
/// downward crossing detaches.
WorldState try_grasp(const WorldState& world);

/// Teleports `obj`. Throws "object grasped" if it is attached.
WorldState perturb(const WorldState& world, const ObjectId& obj, const Pose7& pose);

/// Axis-aligned rectangle in the table plane.
struct Area {
  Eigen::Vector2d center{0.5, 0.0};
  Eigen::Vector2d size{0.8, 0.4};
  bool operator==(const Area&) const = default;
};

/// Initial world plus randomization metadata.
struct Scene {
  WorldState world;
  /// Separation radius per object (default kDefaultObjectRadius).
  std::map<ObjectId, double> radius;
  /// child -> parent: the child keeps its pose relative to the parent when
  /// the parent is re-drawn and is not drawn itself.
  std::map<ObjectId, ObjectId> anchored_to;
  Area area;
  /// Per-object overrides of the randomization area.
  std::map<ObjectId, Area> areas;

  double radius_of(const ObjectId& id) const;
};

/// Draws free objects uniformly in `area` or their own override (xy only) with pairwise
/// distance >= r_i + r_j. Throws after kMaxSceneDraws failed draws.
WorldState randomize_scene(const Scene& scene, const Area& area, std::uint64_t seed);

nlohmann::json to_json(const Bounds& b);
Bounds bounds_from_json(const nlohmann::json& j);
/// Snapshot form: objects, ee, gripper, bounds, time, attached.
nlohmann::json to_json(const WorldState& w);
WorldState world_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Scene& s);
Scene scene_from_json(const nlohmann::json& j);
Scene load_scene_file(const std::string& path);
void save_scene_file(const std::string& path, const Scene& s);

/// One phase of a scripted demonstration. Unset targets hold their value.
struct DemoPhase {
  double duration = 1.0;
  std::optional<Pose7> ee_target;
  std::optional<double> gripper_target;
};

struct DemoScript {
  WorldState initial;
  std::vector<DemoPhase> phases;
  double rate_hz = 100.0;
  std::map<std::string, std::string> meta;
};

/// Minimum-jerk position, slerp orientation and minimum-jerk gripper per
/// phase, recorded through step() so objects follow attachment rules.
/// Throws on targets outside bounds or timing the gripper cannot follow.
Demonstration synth_demo(const DemoScript& script);

/// Minimum-jerk blend 10s^3 - 15s^4 + 6s^5 of s in [0, 1].
double min_jerk(double s);

}  // namespace cobt
