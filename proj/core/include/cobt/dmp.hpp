#pragma once

#include "cobt/pose.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <vector>

namespace cobt {

/// One time-stamped sample of the end-effector channel used for training.
struct PoseSample {
  double t = 0.0;
  Pose7 pose;
  double gripper = 0.0;
};

/// Cartesian DMP: a position system and a quaternion-log orientation system
/// sharing one exponential phase.
struct DmpModel {
  static constexpr int kDefaultBasis = 30;

  Eigen::MatrixXd position_weights;     // K x 3
  Eigen::MatrixXd orientation_weights;  // K x 3
  Eigen::VectorXd centers;              // K, in phase
  Eigen::VectorXd widths;               // K
  double alpha_z = 25.0;
  double beta_z = 6.25;
  double alpha_x = 4.6;
  double tau = 1.0;  // demonstrated duration, seconds
  Pose7 start;
  Pose7 goal;
  /// Demonstrated gripper profile resampled uniformly over normalized time.
  std::vector<double> gripper_profile;
  double gripper_end = 0.0;
  /// When the demonstrated displacement is large enough, new displacements
  /// reuse the forcing term through a yaw rotation + uniform scaling.
  bool similarity_scaling = true;

  int basis_count() const { return static_cast<int>(centers.size()); }
};

struct DmpTrainOptions {
  int basis = DmpModel::kDefaultBasis;
  /// Long segments get at least this many bases per demonstrated second.
  double basis_per_second = 40.0;
  double alpha_z = 25.0;
  double beta_z = 6.25;
  double alpha_x = 4.6;
  /// Demonstrated displacements shorter than this fall back to the plain
  /// additive forcing term (no similarity mapping).
  double min_scaling_displacement = 0.05;
};

/// Fits forcing-term weights by per-basis locally weighted regression.
/// Throws "segment too short" (< 5 samples) or "zero-duration segment".
DmpModel train_dmp(std::span<const PoseSample> segment, const DmpTrainOptions& opts = {});

struct TrajectoryPoint {
  double t = 0.0;
  Pose7 pose;
  double gripper = 0.0;
};
using Trajectory = std::vector<TrajectoryPoint>;

struct RolloutOptions {
  double time_scale = 1.0;
  double dt = 0.01;  // output spacing in seconds
  /// Current gripper value; the replayed profile is blended from here to the
  /// demonstrated endpoint. Defaults to the demonstrated start.
  std::optional<double> gripper_start;
};

/// Integrates the DMP from `start` to `goal` over tau * time_scale seconds.
/// Output has round(tau'/dt) + 1 points, first at t = 0, last at t = tau'.
Trajectory rollout(const DmpModel& model, const Pose7& start, const Pose7& goal,
                   const RolloutOptions& opts = {});

nlohmann::json to_json(const DmpModel& m);
DmpModel dmp_from_json(const nlohmann::json& j);

}  // namespace cobt
