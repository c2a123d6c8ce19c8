#pragma once

#include <Eigen/Geometry>

#include <array>
#include <map>
#include <string>

namespace cobt {

using ObjectId = std::string;

/// Position plus unit quaternion. Serialized as [x, y, z, qw, qx, qy, qz].
struct Pose7 {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Pose7() = default;
  /// Normalizes the quaternion and forces qw >= 0. Throws ValidationError on a
  /// degenerate quaternion or non-finite position.
  Pose7(const Eigen::Vector3d& p, const Eigen::Quaterniond& q);
  Pose7(double x, double y, double z, double qw = 1.0, double qx = 0.0,
        double qy = 0.0, double qz = 0.0);

  static Pose7 from_array(const std::array<double, 7>& a);
  std::array<double, 7> to_array() const;

  static Pose7 from_isometry(const Eigen::Isometry3d& t);
  Eigen::Isometry3d isometry() const;

  /// this ∘ other (other expressed in this frame).
  Pose7 compose(const Pose7& other) const;
  Pose7 inverse() const;

  bool operator==(const Pose7& o) const {
    return position == o.position && orientation.coeffs() == o.orientation.coeffs();
  }
};

using ObjectPoses = std::map<ObjectId, Pose7>;

/// Unit quaternion in the same direction. Throws "degenerate quaternion" when
/// |q| <= 1e-9.
Eigen::Quaterniond quat_normalize(const Eigen::Quaterniond& q);

/// Normalized and sign-fixed so that w >= 0.
Eigen::Quaterniond quat_canonical(const Eigen::Quaterniond& q);

/// Euclidean distance between positions; orientation is ignored.
double pose_distance(const Pose7& a, const Pose7& b);

/// Rotation vector (angle * axis) of q. Shortest arc.
Eigen::Vector3d quat_log(const Eigen::Quaterniond& q);
/// Inverse of quat_log.
Eigen::Quaterniond quat_exp(const Eigen::Vector3d& rotation_vector);

/// Rotation angle between two orientations, in [0, pi].
double angular_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

}  // namespace cobt
