#include "cobt/dmp.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <algorithm>
#include <cmath>

namespace cobt {

namespace {

constexpr std::size_t kMinSegmentSamples = 5;
constexpr int kGripperProfileSamples = 64;
constexpr int kMinSubsteps = 4000;  // internal integration steps per rollout

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("motion-primitives", msg); }

Eigen::VectorXd basis_activations(const DmpModel& m, double s) {
  Eigen::VectorXd psi(m.centers.size());
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const double d = s - m.centers[i];
    psi[i] = std::exp(-m.widths[i] * d * d);
  }
  return psi;
}

Eigen::Vector3d forcing(const DmpModel& m, const Eigen::MatrixXd& w, double s) {
  const Eigen::VectorXd psi = basis_activations(m, s);
  const double sum = psi.sum();
  if (sum < 1e-300) return Eigen::Vector3d::Zero();
  return (w.transpose() * psi) * (s / sum);
}

// Numerical derivative with np.gradient semantics on non-uniform time.
template <typename Vec>
std::vector<Vec> gradient(const std::vector<Vec>& y, const std::vector<double>& t) {
  const std::size_t n = y.size();
  std::vector<Vec> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      d[i] = (y[1] - y[0]) / (t[1] - t[0]);
    } else if (i + 1 == n) {
      d[i] = (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2]);
    } else {
      const double h0 = t[i] - t[i - 1];
      const double h1 = t[i + 1] - t[i];
      d[i] = (h0 * h0 * y[i + 1] - h1 * h1 * y[i - 1] + (h1 * h1 - h0 * h0) * y[i]) /
             (h0 * h1 * (h0 + h1));
    }
  }
  return d;
}

// scale * R with R = tilt * yaw: the yaw about world z aligns the horizontal
// projections, the tilt then rotates within the vertical plane. The map is
// exact (scale * R * demo = new) and never mirrors "up" into "down" by
// rotating about a horizontal axis through the displacement.
// Identity when scaling is disabled or the demo displacement is degenerate.
Eigen::Matrix3d similarity(const DmpModel& m, const Eigen::Vector3d& demo_disp,
                           const Eigen::Vector3d& new_disp) {
  const double dn = demo_disp.norm();
  if (!m.similarity_scaling || dn < 1e-9) return Eigen::Matrix3d::Identity();
  const double nn = new_disp.norm();
  if (nn < 1e-12) return Eigen::Matrix3d::Zero();
  const Eigen::Vector2d a = demo_disp.head<2>();
  const Eigen::Vector2d b = new_disp.head<2>();
  double yaw = 0.0;
  if (a.norm() > 1e-6 && b.norm() > 1e-6) {
    yaw = std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x());
  }
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Quaterniond tilt = Eigen::Quaterniond::FromTwoVectors(rz * demo_disp, new_disp);
  return (nn / dn) * tilt.toRotationMatrix() * rz;
}

double gripper_at(const DmpModel& m, double u) {
  const auto& g = m.gripper_profile;
  if (g.empty()) return m.gripper_end;
  if (g.size() == 1) return g.front();
  const double x = std::clamp(u, 0.0, 1.0) * static_cast<double>(g.size() - 1);
  const std::size_t i = std::min(static_cast<std::size_t>(x), g.size() - 2);
  const double f = x - static_cast<double>(i);
  return g[i] * (1.0 - f) + g[i + 1] * f;
}

}  // namespace

DmpModel train_dmp(std::span<const PoseSample> segment, const DmpTrainOptions& opts) {
  if (segment.size() < kMinSegmentSamples) fail("segment too short");
  if (opts.basis < 10) fail("need at least 10 basis functions");
  const std::size_t n = segment.size();
  const double t0 = segment.front().t;
  const double tau = segment.back().t - t0;
  if (!(tau > 0.0)) fail("zero-duration segment");

  DmpModel m;
  m.alpha_z = opts.alpha_z;
  m.beta_z = opts.beta_z;
  m.alpha_x = opts.alpha_x;
  m.tau = tau;
  m.start = segment.front().pose;
  m.goal = segment.back().pose;
  m.gripper_end = segment.back().gripper;
  m.similarity_scaling =
      (m.goal.position - m.start.position).norm() >= opts.min_scaling_displacement;

  const int k = std::max(opts.basis, static_cast<int>(std::ceil(opts.basis_per_second * tau)));
  m.centers.resize(k);
  m.widths.resize(k);
  for (int i = 0; i < k; ++i) {
    m.centers[i] = std::exp(-m.alpha_x * static_cast<double>(i) / static_cast<double>(k - 1));
  }
  for (int i = 0; i + 1 < k; ++i) {
    const double d = m.centers[i + 1] - m.centers[i];
    m.widths[i] = 1.0 / (d * d);
  }
  m.widths[k - 1] = m.widths[k - 2];

  std::vector<double> t(n);
  std::vector<Eigen::Vector3d> y(n);
  std::vector<Eigen::Quaterniond> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = segment[i].t - t0;
    y[i] = segment[i].pose.position;
    q[i] = segment[i].pose.orientation;
    if (i > 0 && q[i].dot(q[i - 1]) < 0.0) q[i].coeffs() = -q[i].coeffs();
  }
  const auto yd = gradient(y, t);
  const auto ydd = gradient(yd, t);

  // Angular velocity from consecutive quaternions (world frame), then its rate.
  std::vector<Eigen::Vector3d> omega(n, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    omega[i] = quat_log(q[hi] * q[lo].conjugate()) / (t[hi] - t[lo]);
  }
  const auto omegad = gradient(omega, t);

  const double kk = m.alpha_z * m.beta_z;
  const double dd = m.alpha_z;
  const Eigen::Vector3d g = m.goal.position;
  Eigen::MatrixXd f_pos(n, 3), f_rot(n, 3);
  Eigen::VectorXd s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[static_cast<Eigen::Index>(i)] = std::exp(-m.alpha_x * t[i] / tau);
    const Eigen::Vector3d fp = tau * tau * ydd[i] - kk * (g - y[i]) + dd * tau * yd[i];
    const Eigen::Vector3d err = quat_log(m.goal.orientation * q[i].conjugate());
    const Eigen::Vector3d fr = tau * tau * omegad[i] - kk * err + dd * tau * omega[i];
    f_pos.row(static_cast<Eigen::Index>(i)) = fp.transpose();
    f_rot.row(static_cast<Eigen::Index>(i)) = fr.transpose();
  }

  m.position_weights = Eigen::MatrixXd::Zero(k, 3);
  m.orientation_weights = Eigen::MatrixXd::Zero(k, 3);
  for (int b = 0; b < k; ++b) {
    double den = 1e-12;
    Eigen::Vector3d num_p = Eigen::Vector3d::Zero();
    Eigen::Vector3d num_r = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double d = s[ii] - m.centers[b];
      const double psi = std::exp(-m.widths[b] * d * d);
      den += psi * s[ii] * s[ii];
      num_p += psi * s[ii] * f_pos.row(ii).transpose();
      num_r += psi * s[ii] * f_rot.row(ii).transpose();
    }
    m.position_weights.row(b) = (num_p / den).transpose();
    m.orientation_weights.row(b) = (num_r / den).transpose();
  }

  m.gripper_profile.resize(kGripperProfileSamples);
  for (int i = 0; i < kGripperProfileSamples; ++i) {
    const double target_t = tau * static_cast<double>(i) / (kGripperProfileSamples - 1);
    const auto it = std::lower_bound(t.begin(), t.end(), target_t);
    const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - t.begin()), n - 1);
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    const double span = t[hi] - t[lo];
    const double f = span > 0.0 ? std::clamp((target_t - t[lo]) / span, 0.0, 1.0) : 0.0;
    m.gripper_profile[static_cast<std::size_t>(i)] =
        segment[lo].gripper * (1.0 - f) + segment[hi].gripper * f;
  }
  return m;
}

Trajectory rollout(const DmpModel& m, const Pose7& start, const Pose7& goal,
                   const RolloutOptions& opts) {
  if (!(opts.time_scale > 0.0)) fail("time_scale must be > 0");
  if (!(opts.dt > 0.0)) fail("dt must be > 0");
  const double tau = m.tau * opts.time_scale;
  const int steps = std::max(1, static_cast<int>(std::lround(tau / opts.dt)));
  const int sub = std::max(1, (kMinSubsteps + steps - 1) / steps);
  const double h = tau / static_cast<double>(steps * sub);

  const double kk = m.alpha_z * m.beta_z;
  const double dd = m.alpha_z;
  const Eigen::Matrix3d mapping =
      similarity(m, m.goal.position - m.start.position, goal.position - start.position);

  Eigen::Vector3d x = start.position;
  Eigen::Vector3d v = Eigen::Vector3d::Zero();  // tau * xdot
  Eigen::Quaterniond q = start.orientation;
  Eigen::Vector3d eta = Eigen::Vector3d::Zero();  // tau * omega
  const Eigen::Vector3d g = goal.position;
  const Eigen::Quaterniond gq = goal.orientation;
  const double g_demo0 = m.gripper_profile.empty() ? m.gripper_end : m.gripper_profile.front();
  const double g_offset = opts.gripper_start.value_or(g_demo0) - g_demo0;

  Trajectory out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  auto emit = [&](int k) {
    const double u = static_cast<double>(k) / static_cast<double>(steps);
    const double grip = std::clamp(gripper_at(m, u) + g_offset * (1.0 - u), 0.0, 1.0);
    out.push_back({u * tau, Pose7(x, q), grip});
  };
  emit(0);
  double s = 1.0;
  const double decay = std::exp(-m.alpha_x * h / tau);
  for (int k = 1; k <= steps; ++k) {
    for (int j = 0; j < sub; ++j) {
      const Eigen::Vector3d fp = mapping * forcing(m, m.position_weights, s);
      const Eigen::Vector3d fr = forcing(m, m.orientation_weights, s);
      // Semi-implicit Euler: velocities first, then positions with the new velocity.
      v += (h / tau) * (kk * (g - x) - dd * v + fp);
      x += (h / tau) * v;
      eta += (h / tau) * (kk * quat_log(gq * q.conjugate()) - dd * eta + fr);
      q = (quat_exp((h / tau) * eta) * q).normalized();
      s *= decay;
    }
    if (!x.allFinite() || !q.coeffs().allFinite()) {
      throw ExecutionError("motion-primitives",
                           "non-finite integration at step " + std::to_string(k));
    }
    emit(k);
  }
  return out;
}

nlohmann::json to_json(const DmpModel& m) {
  auto flat = [](const Eigen::MatrixXd& w) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) v.push_back(w(r, c));
    }
    return v;
  };
  auto vec = [](const Eigen::VectorXd& x) { return std::vector<double>(x.data(), x.data() + x.size()); };
  return {{"basis", m.basis_count()},
          {"position_weights", flat(m.position_weights)},
          {"orientation_weights", flat(m.orientation_weights)},
          {"centers", vec(m.centers)},
          {"widths", vec(m.widths)},
          {"alpha_z", m.alpha_z},
          {"beta_z", m.beta_z},
          {"alpha_x", m.alpha_x},
          {"tau", m.tau},
          {"start", pose_to_json(m.start)},
          {"goal", pose_to_json(m.goal)},
          {"gripper_profile", m.gripper_profile},
          {"gripper_end", m.gripper_end},
          {"similarity_scaling", m.similarity_scaling}};
}

DmpModel dmp_from_json(const nlohmann::json& j) {
  DmpModel m;
  try {
    const int k = j.at("basis").get<int>();
    auto mat = [k](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(k) * 3) fail("weight array size mismatch");
      Eigen::MatrixXd w(k, 3);
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < 3; ++c) w(r, c) = v[static_cast<std::size_t>(r * 3 + c)];
      }
      return w;
    };
    auto vec = [k](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(k)) fail("basis array size mismatch");
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), k));
    };
    m.position_weights = mat(j.at("position_weights"));
    m.orientation_weights = mat(j.at("orientation_weights"));
    m.centers = vec(j.at("centers"));
    m.widths = vec(j.at("widths"));
    m.alpha_z = j.at("alpha_z").get<double>();
    m.beta_z = j.at("beta_z").get<double>();
    m.alpha_x = j.at("alpha_x").get<double>();
    m.tau = j.at("tau").get<double>();
    m.start = pose_from_json(j.at("start"));
    m.goal = pose_from_json(j.at("goal"));
    m.gripper_profile = j.at("gripper_profile").get<std::vector<double>>();
    m.gripper_end = j.at("gripper_end").get<double>();
    m.similarity_scaling = j.value("similarity_scaling", true);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed DMP: ") + e.what());
  }
  if (!(m.tau > 0.0)) fail("DMP tau must be > 0");
  return m;
}

}  // namespace cobt
