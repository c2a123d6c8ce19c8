#include "cobt/segmenter.hpp"

#include "cobt/changepoint.hpp"
#include "cobt/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace cobt {

namespace {

constexpr double kApproachEpsilon = 1e-4;  // meters; a "decrease" must exceed this
constexpr double kGripperStill = 1e-3;     // per-sample change considered settled
constexpr double kRestFraction = 0.1;      // of peak speed; below counts as at rest

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("segmenter", msg); }


}  // namespace

double nearest_other_distance(const ObjectPoses& objects, const ObjectId& self) {
  const Pose7& p = objects.at(self);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [id, pose] : objects) {
    if (id == self) continue;
    best = std::min(best, pose_distance(p, pose));
  }
  return best;
}

std::string to_string(GripperState s) { return s == GripperState::kOpen ? "Open" : "Closed"; }

std::string to_string(ObjectState s) {
  switch (s) {
    case ObjectState::kNear:
      return "Near";
    case ObjectState::kOnGoal:
      return "OnGoal";
    case ObjectState::kNone:
      break;
  }
  return "None";
}

std::string to_string(EndEffectorState s) {
  return s == EndEffectorState::kNear ? "Near" : "NotNear";
}

GripperState gripper_state_from(const std::string& s) {
  if (s == "Open") return GripperState::kOpen;
  if (s == "Closed" || s == "Close") return GripperState::kClosed;
  fail("unknown gripper state '" + s + "'");
}

ObjectState object_state_from(const std::string& s) {
  if (s == "Near") return ObjectState::kNear;
  if (s == "OnGoal" || s == "Goal" || s == "On_goal") return ObjectState::kOnGoal;
  if (s == "None") return ObjectState::kNone;
  fail("unknown object state '" + s + "'");
}

EndEffectorState end_effector_state_from(const std::string& s) {
  if (s == "Near") return EndEffectorState::kNear;
  if (s == "NotNear" || s == "!Near") return EndEffectorState::kNotNear;
  fail("unknown end-effector state '" + s + "'");
}

VelocityProfile velocity_norms(const Demonstration& demo) {
  const auto& s = demo.samples;
  const std::size_t n = s.size();
  VelocityProfile v(n, 0.0);
  if (n < 2) return v;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    const Eigen::Vector3d dp = s[hi].ee.position - s[lo].ee.position;
    v[i] = dp.norm() / (s[hi].t - s[lo].t);
  }
  return v;
}

VelocityProfile moving_average(const VelocityProfile& v, std::size_t window) {
  if (window <= 1 || v.empty()) return v;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(v.size());
  VelocityProfile out(v.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, i + half);
    double sum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) sum += v[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<std::size_t> detect_changepoints(const VelocityProfile& v, double penalty,
                                             std::size_t min_size) {
  if (v.empty()) return {};
  const auto r = pelt(v, {penalty, min_size});
  std::vector<std::size_t> out{0};
  for (std::size_t b : r.breakpoints) {
    if (b > 0 && b < v.size() - 1) out.push_back(b);
  }
  if (v.size() > 1) out.push_back(v.size() - 1);
  return out;
}

Pose7 demo_goal_pose(const Demonstration& demo, const ObjectId& target, const ObjectId& goal) {
  if (!demo.has_object(target)) fail("unknown target object '" + target + "'");
  if (!demo.has_object(goal)) fail("unknown goal object '" + goal + "'");
  const auto& last = demo.samples.back().objects;
  return last.at(goal).inverse().compose(last.at(target));
}

std::vector<SymbolicState> ground_states(const Demonstration& demo,
                                         const std::vector<std::size_t>& boundaries,
                                         const ObjectId& target, const ObjectId& goal,
                                         double threshold) {
  if (!(threshold > 0.0)) fail("threshold must be > 0");
  const Pose7 goal_rel = demo_goal_pose(demo, target, goal);
  std::vector<SymbolicState> states;
  states.reserve(boundaries.size());
  double prev_other = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < boundaries.size(); ++k) {
    const std::size_t i = boundaries[k];
    if (i >= demo.size()) fail("boundary index out of range");
    const auto& s = demo.samples[i];
    const Pose7& tgt = s.objects.at(target);
    SymbolicState st;
    st.g = s.gripper > kGripperClosedThreshold ? GripperState::kClosed : GripperState::kOpen;
    st.e = pose_distance(s.ee, tgt) < threshold ? EndEffectorState::kNear
                                                : EndEffectorState::kNotNear;
    const Pose7 goal_world = s.objects.at(goal).compose(goal_rel);
    const double other = nearest_other_distance(s.objects, target);
    if (pose_distance(tgt, goal_world) < threshold) {
      st.o = ObjectState::kOnGoal;
    } else if (k > 0 && other < threshold && other < prev_other - kApproachEpsilon) {
      st.o = ObjectState::kNear;
    } else {
      st.o = ObjectState::kNone;
    }
    prev_other = other;
    states.push_back(st);
  }
  return states;
}

std::vector<GripperEvent> gripper_events(const Demonstration& demo) {
  std::vector<GripperEvent> events;
  const auto& s = demo.samples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const bool was = s[i - 1].gripper > kGripperClosedThreshold;
    const bool is = s[i].gripper > kGripperClosedThreshold;
    if (was == is) continue;
    std::size_t j = i;
    while (j + 1 < s.size() && std::abs(s[j + 1].gripper - s[j].gripper) > kGripperStill) ++j;
    events.push_back({i, j});
  }
  return events;
}

SegmentedDataset filter_segments(const Demonstration& demo, std::vector<std::size_t> boundaries,
                                 const VelocityProfile& v, const ObjectId& target,
                                 const ObjectId& goal, double threshold) {
  if (boundaries.size() < 2 || v.size() != demo.size()) fail("no action detected");
  std::sort(boundaries.begin(), boundaries.end());
  boundaries.erase(std::unique(boundaries.begin(), boundaries.end()), boundaries.end());
  const std::size_t last = demo.size() - 1;

  // Sequential pass: consecutive boundaries whose state equals the state at
  // the start of the current run (grounded against it) join that run.
  std::vector<std::vector<std::size_t>> runs{{boundaries.front()}};
  for (std::size_t k = 1; k < boundaries.size(); ++k) {
    const std::size_t b = boundaries[k];
    const auto st = ground_states(demo, {runs.back().front(), b}, target, goal, threshold);
    if (st[1] == st[0]) runs.back().push_back(b);
    else runs.push_back({b});
  }
  if (runs.size() < 2) fail("no action detected");
  // One boundary per run: the first sample of the demo, the last sample of the
  // demo, and otherwise the first member at rest (so the state holds with
  // margin), falling back to the first member.
  const double rest = kRestFraction * *std::max_element(v.begin(), v.end());
  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    if (r == 0) {
      kept.push_back(run.front());
    } else if (r + 1 == runs.size()) {
      kept.push_back(last);
    } else {
      auto it = std::find_if(run.begin(), run.end(), [&](std::size_t b) { return v[b] <= rest; });
      kept.push_back(it == run.end() ? run.front() : *it);
    }
  }
  // Re-grounding after merges can make neighbors equal again; repeat until stable.
  for (;;) {
    auto states = ground_states(demo, kept, target, goal, threshold);
    std::size_t dup = 0;
    for (std::size_t k = 1; k < kept.size(); ++k) {
      if (states[k] == states[k - 1]) {
        dup = k;
        break;
      }
    }
    if (dup == 0) {
      if (kept.size() < 2) fail("no action detected");
      SegmentedDataset out;
      out.boundaries = std::move(kept);
      out.states = std::move(states);
      out.target_object = target;
      out.goal_object = goal;
      return out;
    }
    if (kept.size() <= 2) fail("no action detected");
    if (kept[dup] == last) kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(dup - 1));
    else kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(dup));
  }
}

SegmentedDataset segment(const Demonstration& demo, const ObjectId& target, const ObjectId& goal,
                         const SegmenterOptions& opts) {
  validate(demo);
  if (!demo.has_object(target)) fail("unknown target object '" + target + "'");
  if (!demo.has_object(goal)) fail("unknown goal object '" + goal + "'");
  const VelocityProfile v = velocity_norms(demo);
  const VelocityProfile smooth = moving_average(v, opts.smoothing_window);
  const double penalty = opts.penalty.value_or(default_penalty(smooth));
  std::vector<std::size_t> candidates = detect_changepoints(smooth, penalty, opts.min_segment);

  // Gripper transitions become boundaries at the sample where they settle;
  // velocity change points inside a transition are dropped.
  const auto events = gripper_events(demo);
  std::erase_if(candidates, [&](std::size_t b) {
    return std::any_of(events.begin(), events.end(),
                       [b](const GripperEvent& e) { return b >= e.crossing && b < e.settled; });
  });
  for (const auto& e : events) candidates.push_back(e.settled);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  return filter_segments(demo, std::move(candidates), v, target, goal, opts.threshold);
}

nlohmann::json to_json(const SegmentedDataset& seg) {
  nlohmann::json states = nlohmann::json::array();
  for (const auto& s : seg.states) states.push_back({to_string(s.g), to_string(s.o), to_string(s.e)});
  return {{"boundaries", seg.boundaries},
          {"states", states},
          {"target", seg.target_object},
          {"goal", seg.goal_object}};
}

SegmentedDataset segmented_from_json(const nlohmann::json& j) {
  SegmentedDataset seg;
  try {
    seg.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
    for (const auto& row : j.at("states")) {
      seg.states.push_back({gripper_state_from(row.at(0).get<std::string>()),
                            object_state_from(row.at(1).get<std::string>()),
                            end_effector_state_from(row.at(2).get<std::string>())});
    }
    seg.target_object = j.at("target").get<std::string>();
    seg.goal_object = j.at("goal").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed segments.json: ") + e.what());
  }
  if (seg.states.size() != seg.boundaries.size()) fail("states/boundaries length mismatch");
  return seg;
}

}  // namespace cobt
