#include "cobt/primitives.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <algorithm>
#include <limits>

namespace cobt {

namespace {

constexpr double kApproachEpsilon = 1e-4;
constexpr double kHeldRadius = 0.05;     // closed gripper within this distance holds the object

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("motion-primitives", msg); }

}  // namespace

std::vector<PoseSample> segment_samples(const Demonstration& demo, std::size_t begin,
                                        std::size_t end) {
  if (begin > end || end >= demo.size()) fail("segment range out of bounds");
  std::vector<PoseSample> out;
  out.reserve(end - begin + 1);
  for (std::size_t i = begin; i <= end; ++i) {
    const auto& s = demo.samples[i];
    out.push_back({s.t, s.ee, s.gripper});
  }
  return out;
}

ObjectId relative_object(const Demonstration& demo, std::size_t segment_end,
                         std::size_t segment_start) {
  if (segment_end >= demo.size() || segment_start >= demo.size()) fail("index out of range");
  const auto& a = demo.samples[segment_start];
  const auto& b = demo.samples[segment_end];
  if (b.objects.empty()) fail("empty scene");
  // An object held at the segment start moves with the ee and cannot anchor it.
  ObjectId held;
  if (a.gripper > kGripperClosedThreshold) {
    double d_held = kHeldRadius;
    for (const auto& [id, pose] : a.objects) {
      const double d = pose_distance(a.ee, pose);
      if (d < d_held) {
        d_held = d;
        held = id;
      }
    }
  }
  if (!held.empty() && b.objects.size() == 1) held.clear();
  ObjectId best_any, best_approached;
  double d_any = std::numeric_limits<double>::infinity();
  double d_approached = d_any;
  // std::map iterates in id order, so strict < keeps the smallest id on ties.
  for (const auto& [id, pose] : b.objects) {
    if (id == held) continue;
    const double d_end = pose_distance(b.ee, pose);
    const double d_start = pose_distance(a.ee, a.objects.at(id));
    if (d_end < d_any) {
      d_any = d_end;
      best_any = id;
    }
    if (d_end < d_start - kApproachEpsilon && d_end < d_approached) {
      d_approached = d_end;
      best_approached = id;
    }
  }
  return best_approached.empty() ? best_any : best_approached;
}

Pose7 ee_transformation(const Demonstration& demo, const ObjectId& obj, std::size_t index) {
  if (index >= demo.size()) fail("index out of range");
  const auto& s = demo.samples[index];
  const auto it = s.objects.find(obj);
  if (it == s.objects.end()) fail("unknown object '" + obj + "'");
  return it->second.inverse().compose(s.ee);
}

Eigen::Matrix4d to_matrix(const Pose7& p) { return p.isometry().matrix(); }

Pose7 from_matrix(const Eigen::Matrix4d& m) {
  Eigen::Isometry3d t;
  t.matrix() = m;
  return Pose7::from_isometry(t);
}

std::vector<PrimitiveAction> learn_primitives(const Demonstration& demo,
                                              const SegmentedDataset& seg,
                                              const DmpTrainOptions& opts) {
  if (seg.boundaries.size() < 2) fail("segmented dataset has no actions");
  if (seg.boundaries.back() >= demo.size()) fail("segmentation does not match demonstration");
  std::vector<PrimitiveAction> actions;
  for (std::size_t b = 0; b + 1 < seg.boundaries.size(); ++b) {
    const std::size_t i0 = seg.boundaries[b];
    const std::size_t i1 = seg.boundaries[b + 1];
    auto samples = segment_samples(demo, i0, i1);
    PrimitiveAction a;
    a.index = static_cast<int>(b) + 1;
    a.dmps.forward = train_dmp(samples, opts);

    // Reverse: same samples played backwards on a fresh time axis.
    std::vector<PoseSample> rev(samples.rbegin(), samples.rend());
    const double t_end = samples.back().t;
    for (std::size_t k = 0; k < rev.size(); ++k) rev[k].t = t_end - rev[k].t;
    a.dmps.reverse = train_dmp(rev, opts);

    a.relative_object = relative_object(demo, i1, i0);
    a.end_transform = ee_transformation(demo, a.relative_object, i1);
    a.start_transform = ee_transformation(demo, a.relative_object, i0);
    actions.push_back(std::move(a));
  }
  return actions;
}

nlohmann::json to_json(const PrimitiveAction& a) {
  auto flat = [](const Pose7& p) {
    const Eigen::Matrix4d m = to_matrix(p);
    std::vector<double> v;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) v.push_back(m(r, c));
    }
    return v;
  };
  return {{"index", a.index},
          {"relative_object", a.relative_object},
          {"end_transform", flat(a.end_transform)},
          {"start_transform", flat(a.start_transform)},
          {"forward", to_json(a.dmps.forward)},
          {"reverse", to_json(a.dmps.reverse)}};
}

PrimitiveAction action_from_json(const nlohmann::json& j) {
  auto unflat = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    if (v.size() != 16) fail("transform must have 16 entries");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
    }
    return from_matrix(m);
  };
  PrimitiveAction a;
  try {
    a.index = j.at("index").get<int>();
    a.relative_object = j.at("relative_object").get<std::string>();
    a.end_transform = unflat(j.at("end_transform"));
    a.start_transform = j.contains("start_transform") ? unflat(j["start_transform"]) : Pose7{};
    a.dmps.forward = dmp_from_json(j.at("forward"));
    a.dmps.reverse = dmp_from_json(j.at("reverse"));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed action: ") + e.what());
  }
  return a;
}

nlohmann::json actions_to_json(const std::vector<PrimitiveAction>& actions) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : actions) arr.push_back(to_json(a));
  return {{"actions", arr}};
}

std::vector<PrimitiveAction> actions_from_json(const nlohmann::json& j) {
  std::vector<PrimitiveAction> out;
  const auto& arr = j.is_object() ? j.at("actions") : j;
  for (const auto& a : arr) out.push_back(action_from_json(a));
  return out;
}

}  // namespace cobt
