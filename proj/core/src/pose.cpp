#include "cobt/pose.hpp"

#include "cobt/error.hpp"

#include <cmath>

namespace cobt {

Eigen::Quaterniond quat_normalize(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 1e-9) || !std::isfinite(n)) {
    throw ValidationError("demo-model", "degenerate quaternion");
  }
  return Eigen::Quaterniond(q.coeffs() / n);
}

Eigen::Quaterniond quat_canonical(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond u = quat_normalize(q);
  if (u.w() < 0.0) u.coeffs() = -u.coeffs();
  return u;
}

Pose7::Pose7(const Eigen::Vector3d& p, const Eigen::Quaterniond& q)
    : position(p), orientation(quat_canonical(q)) {
  if (!p.allFinite()) throw ValidationError("demo-model", "non-finite position");
}

Pose7::Pose7(double x, double y, double z, double qw, double qx, double qy, double qz)
    : Pose7(Eigen::Vector3d(x, y, z), Eigen::Quaterniond(qw, qx, qy, qz)) {}

Pose7 Pose7::from_array(const std::array<double, 7>& a) {
  return Pose7(a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
}

std::array<double, 7> Pose7::to_array() const {
  return {position.x(), position.y(), position.z(), orientation.w(),
          orientation.x(), orientation.y(), orientation.z()};
}

Pose7 Pose7::from_isometry(const Eigen::Isometry3d& t) {
  return Pose7(t.translation(), Eigen::Quaterniond(t.linear()));
}

Eigen::Isometry3d Pose7::isometry() const {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = orientation.toRotationMatrix();
  t.translation() = position;
  return t;
}

Pose7 Pose7::compose(const Pose7& other) const {
  return Pose7(position + orientation * other.position, orientation * other.orientation);
}

Pose7 Pose7::inverse() const {
  const Eigen::Quaterniond qi = orientation.conjugate();
  return Pose7(-(qi * position), qi);
}

double pose_distance(const Pose7& a, const Pose7& b) {
  return (a.position - b.position).norm();
}

Eigen::Vector3d quat_log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Eigen::Vector3d v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;  // small-angle limit
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

Eigen::Quaterniond quat_exp(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * r.x(), 0.5 * r.y(), 0.5 * r.z());
    return q.normalized();
  }
  const Eigen::Vector3d axis = r / angle;
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
}

double angular_distance(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  return quat_log(a.conjugate() * b).norm();
}

}  // namespace cobt
