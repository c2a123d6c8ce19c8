#pragma once

#include "cobt/demo.hpp"
#include "cobt/dmp.hpp"
#include "cobt/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace cobt {

/// Forward model plus one trained on the time-reversed segment.
struct DmpSet {
  DmpModel forward;
  DmpModel reverse;
};

struct PrimitiveAction {
  int index = 1;  // action ordinal b, 1-based
  DmpSet dmps;
  ObjectId relative_object;
  /// End-effector pose in the relative object's frame at segment end.
  Pose7 end_transform;
  /// End-effector pose in the relative object's frame at segment start.
  Pose7 start_transform;
};

/// Pose + gripper samples of demo[begin..end] inclusive.
std::vector<PoseSample> segment_samples(const Demonstration& demo, std::size_t begin,
                                        std::size_t end);

/// Among objects the end-effector approached during [segment_start,
/// segment_end], the nearest one at the end; otherwise the nearest object at
/// the end. Ties resolve to the lexicographically smallest id. An object held
/// at the segment start (gripper closed, within 5 cm) is never chosen unless
/// it is the only object.
ObjectId relative_object(const Demonstration& demo, std::size_t segment_end,
                         std::size_t segment_start);

/// (world pose of obj)^-1 * (world pose of ee) at sample `index`.
Pose7 ee_transformation(const Demonstration& demo, const ObjectId& obj, std::size_t index);

/// Homogeneous 4x4 form of a pose (row-major when flattened).
Eigen::Matrix4d to_matrix(const Pose7& p);
Pose7 from_matrix(const Eigen::Matrix4d& m);

/// One PrimitiveAction per segment of `seg`.
std::vector<PrimitiveAction> learn_primitives(const Demonstration& demo,
                                              const SegmentedDataset& seg,
                                              const DmpTrainOptions& opts = {});

nlohmann::json to_json(const PrimitiveAction& a);
PrimitiveAction action_from_json(const nlohmann::json& j);
nlohmann::json actions_to_json(const std::vector<PrimitiveAction>& actions);
std::vector<PrimitiveAction> actions_from_json(const nlohmann::json& j);

}  // namespace cobt
