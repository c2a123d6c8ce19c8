#pragma once

#include "cobt/pipeline.hpp"
#include "cobt/tasks.hpp"

#include <map>
#include <string>

namespace cobt::test {

/// Fixture learned once per test binary.
inline const LearnResult& learned(const std::string& fixture) {
  static std::map<std::string, LearnResult> cache;
  auto it = cache.find(fixture);
  if (it == cache.end()) {
    const TaskFixture fx = fixture_by_name(fixture);
    it = cache.emplace(fixture, learn_skill(fx.demo(), fx.target, fx.goal, fixture)).first;
  }
  return it->second;
}

inline const Demonstration& fixture_demo(const std::string& fixture) {
  static std::map<std::string, Demonstration> cache;
  auto it = cache.find(fixture);
  if (it == cache.end()) it = cache.emplace(fixture, fixture_by_name(fixture).demo()).first;
  return it->second;
}

/// Demonstration from explicit (ee, gripper, objects) rows at 100 Hz.
inline Demonstration make_demo(const std::vector<Pose7>& ee, const std::vector<double>& g,
                               const std::vector<ObjectPoses>& objects) {
  Demonstration d;
  for (std::size_t i = 0; i < ee.size(); ++i) {
    d.samples.push_back({0.01 * static_cast<double>(i), ee[i], g[i], objects[i]});
  }
  return d;
}

}  // namespace cobt::test
