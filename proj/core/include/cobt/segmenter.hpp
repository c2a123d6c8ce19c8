#pragma once

#include "cobt/demo.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cobt {

enum class GripperState { kOpen, kClosed };
enum class ObjectState { kNear, kOnGoal, kNone };
enum class EndEffectorState { kNear, kNotNear };

/// Grounded (g, o, e) triple at one boundary.
struct SymbolicState {
  GripperState g = GripperState::kOpen;
  ObjectState o = ObjectState::kNone;
  EndEffectorState e = EndEffectorState::kNotNear;

  bool operator==(const SymbolicState&) const = default;
};

std::string to_string(GripperState s);
std::string to_string(ObjectState s);
std::string to_string(EndEffectorState s);
GripperState gripper_state_from(const std::string& s);
ObjectState object_state_from(const std::string& s);
EndEffectorState end_effector_state_from(const std::string& s);

using VelocityProfile = std::vector<double>;

struct SegmentedDataset {
  std::vector<std::size_t> boundaries;  // i_1 = 0 ... i_B = N - 1
  std::vector<SymbolicState> states;    // one per boundary
  ObjectId target_object;
  ObjectId goal_object;

  std::size_t action_count() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }
};

inline constexpr double kDefaultThreshold = 0.05;

struct SegmenterOptions {
  std::optional<double> penalty;  // default_penalty() of the smoothed profile when unset
  double threshold = kDefaultThreshold;
  std::size_t smoothing_window = 5;
  std::size_t min_segment = 2;
};

/// Translational speed per sample: central differences, one-sided at the ends.
VelocityProfile velocity_norms(const Demonstration& demo);

/// Centered moving average; the window shrinks at the edges.
VelocityProfile moving_average(const VelocityProfile& v, std::size_t window);

/// Penalized L2 change points of v. Always contains 0 and N - 1.
std::vector<std::size_t> detect_changepoints(const VelocityProfile& v, double penalty,
                                             std::size_t min_size = 2);

/// Distance from `self` to the closest other object; infinity when alone.
double nearest_other_distance(const ObjectPoses& objects, const ObjectId& self);

/// Target pose expressed in the goal object's frame at the demonstration's
/// final sample; this is what "on goal" means while grounding.
Pose7 demo_goal_pose(const Demonstration& demo, const ObjectId& target, const ObjectId& goal);

/// Grounds every boundary. The object "Near" comparison uses the preceding
/// boundary in `boundaries`.
std::vector<SymbolicState> ground_states(const Demonstration& demo,
                                         const std::vector<std::size_t>& boundaries,
                                         const ObjectId& target, const ObjectId& goal,
                                         double threshold = kDefaultThreshold);

/// Gripper transitions across 0.5, placed where the transition settles.
struct GripperEvent {
  std::size_t crossing;  // first sample on the new side of 0.5
  std::size_t settled;   // first sample where the gripper stops moving
};
std::vector<GripperEvent> gripper_events(const Demonstration& demo);

/// Groups consecutive boundaries with equal states into runs, keeps one
/// boundary per run (the first at rest, speed <= 10% of peak) and re-grounds
/// until adjacent states all differ. Throws "no action detected" when fewer
/// than two boundaries survive.
SegmentedDataset filter_segments(const Demonstration& demo, std::vector<std::size_t> boundaries,
                                 const VelocityProfile& v, const ObjectId& target,
                                 const ObjectId& goal, double threshold = kDefaultThreshold);

/// velocity_norms -> smoothing -> detect_changepoints (+ gripper events) ->
/// ground_states -> filter_segments.
SegmentedDataset segment(const Demonstration& demo, const ObjectId& target, const ObjectId& goal,
                         const SegmenterOptions& opts = {});

nlohmann::json to_json(const SegmentedDataset& seg);
SegmentedDataset segmented_from_json(const nlohmann::json& j);

}  // namespace cobt
