#include "cobt/world.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace cobt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("world-sim", msg); }

Eigen::Vector3d vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) fail("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

void reapply_attachment(WorldState& w) {
  if (w.attachment) w.objects.at(w.attachment->object) = w.ee.compose(w.attachment->grasp);
}

// Gripper minimum-jerk peak rate is 1.875 * |delta| / T.
constexpr double kMinJerkPeakRate = 1.875;

}  // namespace

bool Bounds::contains(const Eigen::Vector3d& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

Eigen::Vector3d Bounds::clamp(const Eigen::Vector3d& p) const {
  return p.cwiseMax(min).cwiseMin(max);
}

const Pose7& WorldState::object(const ObjectId& id) const {
  auto it = objects.find(id);
  if (it == objects.end()) fail("unknown object '" + id + "'");
  return it->second;
}

WorldState step(const WorldState& world, const Pose7& ee_target, double gripper_target,
                double dt) {
  if (!(dt > 0.0)) fail("dt must be > 0");
  WorldState w = world;
  w.ee = Pose7(w.bounds.clamp(ee_target.position), ee_target.orientation);
  const double target = std::clamp(gripper_target, 0.0, 1.0);
  const double max_delta = kGripperMaxRate * dt;
  w.gripper = std::clamp(w.gripper + std::clamp(target - w.gripper, -max_delta, max_delta), 0.0,
                         1.0);
  w = try_grasp(w);
  reapply_attachment(w);
  w.time += dt;
  return w;
}

WorldState try_grasp(const WorldState& world) {
  WorldState w = world;
  const bool closed = w.gripper > kGripperClosedThreshold;
  if (closed && !w.latched_closed && !w.attachment) {
    const ObjectId* best = nullptr;
    double best_d = kGraspRadius;
    for (const auto& [id, pose] : w.objects) {
      const double d = pose_distance(w.ee, pose);
      if (d < best_d) {
        best_d = d;
        best = &id;
      }
    }
    if (best) w.attachment = Attachment{*best, w.ee.inverse().compose(w.objects.at(*best))};
  } else if (!closed && w.latched_closed) {
    w.attachment.reset();
  }
  w.latched_closed = closed;
  return w;
}

WorldState perturb(const WorldState& world, const ObjectId& obj, const Pose7& pose) {
  if (!world.has_object(obj)) fail("unknown object '" + obj + "'");
  if (world.attachment && world.attachment->object == obj) {
    throw ValidationError("world-sim", "object grasped");
  }
  WorldState w = world;
  w.objects[obj] = pose;
  return w;
}

double Scene::radius_of(const ObjectId& id) const {
  auto it = radius.find(id);
  return it == radius.end() ? kDefaultObjectRadius : it->second;
}

WorldState randomize_scene(const Scene& scene, const Area& area, std::uint64_t seed) {
  const Bounds& b = scene.world.bounds;
  auto check = [&b](const Area& a) {
    const Eigen::Vector2d lo = a.center - a.size / 2.0;
    const Eigen::Vector2d hi = a.center + a.size / 2.0;
    if (!(a.size.array() >= 0.0).all() || lo.x() < b.min.x() || lo.y() < b.min.y() ||
        hi.x() > b.max.x() || hi.y() > b.max.y()) {
      fail("randomization area outside bounds");
    }
  };
  check(area);
  std::vector<ObjectId> free;
  std::vector<std::uniform_real_distribution<double>> ux, uy;
  for (const auto& [id, pose] : scene.world.objects) {
    if (scene.anchored_to.count(id)) continue;
    auto it = scene.areas.find(id);
    const Area& a = it == scene.areas.end() ? area : it->second;
    check(a);
    free.push_back(id);
    ux.emplace_back(a.center.x() - a.size.x() / 2.0, a.center.x() + a.size.x() / 2.0);
    uy.emplace_back(a.center.y() - a.size.y() / 2.0, a.center.y() + a.size.y() / 2.0);
  }
  std::mt19937_64 rng(seed);

  WorldState w = scene.world;
  for (int draw = 0; draw < kMaxSceneDraws; ++draw) {
    std::map<ObjectId, Eigen::Vector2d> xy;
    for (std::size_t i = 0; i < free.size(); ++i) {
      const double x = ux[i](rng);
      xy[free[i]] = {x, uy[i](rng)};
    }
    bool ok = true;
    for (std::size_t i = 0; ok && i < free.size(); ++i) {
      for (std::size_t j = i + 1; ok && j < free.size(); ++j) {
        const double sep = scene.radius_of(free[i]) + scene.radius_of(free[j]);
        ok = (xy[free[i]] - xy[free[j]]).norm() >= sep;
      }
    }
    if (!ok) continue;
    for (const auto& id : free) {
      const Pose7& p = scene.world.objects.at(id);
      w.objects[id] = Pose7({xy[id].x(), xy[id].y(), p.position.z()}, p.orientation);
    }
    // Children follow their (possibly anchored) parents; resolve chains.
    std::map<ObjectId, bool> placed;
    for (const auto& id : free) placed[id] = true;
    for (std::size_t pass = 0; pass <= scene.anchored_to.size(); ++pass) {
      for (const auto& [child, parent] : scene.anchored_to) {
        if (placed[child] || !placed[parent]) continue;
        const Pose7 rel =
            scene.world.object(parent).inverse().compose(scene.world.object(child));
        w.objects[child] = w.objects.at(parent).compose(rel);
        placed[child] = true;
      }
    }
    for (const auto& [child, parent] : scene.anchored_to) {
      if (!placed[child]) fail("anchor cycle at '" + child + "'");
    }
    w.attachment.reset();
    w.latched_closed = w.gripper > kGripperClosedThreshold;
    return w;
  }
  fail("cannot satisfy object separation after " + std::to_string(kMaxSceneDraws) + " draws");
}

nlohmann::json to_json(const Bounds& b) {
  return nlohmann::json::array({vec_to_json(b.min), vec_to_json(b.max)});
}

Bounds bounds_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) fail("bounds must be [min3, max3]");
  Bounds b{vec3_from_json(j[0]), vec3_from_json(j[1])};
  if (!(b.min.array() <= b.max.array()).all()) fail("bounds min exceeds max");
  return b;
}

nlohmann::json to_json(const WorldState& w) {
  nlohmann::json objs = nlohmann::json::object();
  for (const auto& [id, pose] : w.objects) objs[id] = pose_to_json(pose);
  return {{"objects", objs},
          {"ee", pose_to_json(w.ee)},
          {"gripper", w.gripper},
          {"bounds", to_json(w.bounds)},
          {"time", w.time},
          {"attached", w.attachment ? nlohmann::json(w.attachment->object) : nlohmann::json()}};
}

WorldState world_from_json(const nlohmann::json& j) {
  WorldState w;
  try {
    for (const auto& [id, pose] : j.at("objects").items()) w.objects[id] = pose_from_json(pose);
    if (j.contains("ee")) w.ee = pose_from_json(j["ee"]);
    w.gripper = j.value("gripper", 0.0);
    if (j.contains("bounds")) w.bounds = bounds_from_json(j["bounds"]);
    w.time = j.value("time", 0.0);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed scene: ") + e.what());
  }
  if (w.gripper < 0.0 || w.gripper > 1.0) fail("gripper out of [0,1]");
  if (!w.bounds.contains(w.ee.position)) fail("ee outside bounds");
  w.latched_closed = w.gripper > kGripperClosedThreshold;
  if (j.contains("attached") && !j["attached"].is_null()) {
    const auto id = j["attached"].get<std::string>();
    w.attachment = Attachment{id, w.ee.inverse().compose(w.object(id))};
  }
  return w;
}

nlohmann::json to_json(const Scene& s) {
  nlohmann::json j = to_json(s.world);
  j.erase("time");
  j.erase("attached");
  j["radius"] = s.radius;
  j["anchored"] = s.anchored_to;
  auto area_json = [](const Area& a) {
    return nlohmann::json{{"center", vec_to_json(a.center)}, {"size", vec_to_json(a.size)}};
  };
  j["area"] = area_json(s.area);
  if (!s.areas.empty()) {
    j["areas"] = nlohmann::json::object();
    for (const auto& [id, a] : s.areas) j["areas"][id] = area_json(a);
  }
  return j;
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  s.world = world_from_json(j);
  try {
    if (j.contains("radius")) s.radius = j["radius"].get<std::map<ObjectId, double>>();
    if (j.contains("anchored")) s.anchored_to = j["anchored"].get<std::map<ObjectId, ObjectId>>();
    auto area_from = [](const nlohmann::json& a) {
      Area out;
      out.center = {a.at("center").at(0).get<double>(), a.at("center").at(1).get<double>()};
      out.size = {a.at("size").at(0).get<double>(), a.at("size").at(1).get<double>()};
      return out;
    };
    if (j.contains("area")) s.area = area_from(j["area"]);
    if (j.contains("areas")) {
      for (const auto& [id, a] : j["areas"].items()) s.areas[id] = area_from(a);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed scene: ") + e.what());
  }
  for (const auto& [child, parent] : s.anchored_to) {
    if (!s.world.has_object(child) || !s.world.has_object(parent)) {
      fail("anchor references unknown object");
    }
  }
  for (const auto& [id, r] : s.radius) {
    if (!(r >= 0.0)) fail("negative radius for '" + id + "'");
  }
  return s;
}

Scene load_scene_file(const std::string& path) {
  return scene_from_json(read_json_file(path, "world-sim"));
}

void save_scene_file(const std::string& path, const Scene& s) {
  write_json_file_atomic(path, to_json(s));
}

double min_jerk(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

Demonstration synth_demo(const DemoScript& script) {
  if (!(script.rate_hz > 0.0)) fail("rate must be > 0");
  if (script.phases.empty()) fail("empty demonstration script");
  const double dt = 1.0 / script.rate_hz;
  Demonstration demo;
  demo.sample_rate_hz = script.rate_hz;
  demo.meta = script.meta;

  WorldState w = script.initial;
  auto record = [&demo, &w](double t) {
    demo.samples.push_back({t, w.ee, w.gripper, w.objects});
  };
  std::size_t k = 0;
  record(0.0);
  for (std::size_t p = 0; p < script.phases.size(); ++p) {
    const DemoPhase& ph = script.phases[p];
    const std::string where = "phase " + std::to_string(p + 1);
    const long steps = std::lround(ph.duration * script.rate_hz);
    if (steps < 1) fail(where + ": duration shorter than one sample");
    const Pose7 from = w.ee;
    const Pose7 to = ph.ee_target.value_or(from);
    if (!w.bounds.contains(to.position)) fail(where + ": waypoint outside bounds");
    const double g0 = w.gripper;
    const double g1 = ph.gripper_target.value_or(g0);
    if (g1 < 0.0 || g1 > 1.0) fail(where + ": gripper target out of [0,1]");
    const double T = static_cast<double>(steps) * dt;
    if (kMinJerkPeakRate * std::abs(g1 - g0) / T > kGripperMaxRate + 1e-12) {
      fail(where + ": infeasible schedule timing (gripper faster than slew limit)");
    }
    for (long i = 1; i <= steps; ++i) {
      const double s = min_jerk(static_cast<double>(i) / static_cast<double>(steps));
      const Eigen::Vector3d pos = from.position + s * (to.position - from.position);
      const Pose7 target(pos, from.orientation.slerp(s, to.orientation));
      w = step(w, target, g0 + s * (g1 - g0), dt);
      ++k;
      record(static_cast<double>(k) * dt);
    }
  }
  validate(demo);
  return demo;
}

}  // namespace cobt
