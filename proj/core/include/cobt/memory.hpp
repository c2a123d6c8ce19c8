#pragma once

#include "cobt/bt.hpp"
#include "cobt/runtime.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace cobt {

inline constexpr const char* kMemoryFormat = "cobt-memory/1";

/// Checks that the tree is well formed and its action leaves cover
/// 1..actions.size() exactly once each.
void validate(const SkillRecord& r);
nlohmann::json to_json(const SkillRecord& r);
SkillRecord skill_from_json(const nlohmann::json& j);

/// The skill store. Readers share, writers are exclusive.
class SkillMemory {
 public:
  SkillMemory() = default;
  SkillMemory(const SkillMemory& other);
  SkillMemory& operator=(const SkillMemory& other);

  /// Throws on an invalid record or a duplicate name.
  void save_skill(SkillRecord record);
  std::optional<SkillRecord> by_name(const std::string& name) const;
  /// Most recently saved skill whose target is `target`.
  std::optional<SkillRecord> by_target(const ObjectId& target) const;
  std::vector<SkillRecord> records() const;
  std::vector<std::string> names() const;
  bool empty() const;
  std::size_t size() const;
  bool memorized_target(const ObjectId& id) const;

  nlohmann::json to_json() const;
  static SkillMemory from_json(const nlohmann::json& j);
  /// Write-temp-then-rename.
  void save(const std::string& path) const;
  /// A missing or empty file yields an empty memory.
  static SkillMemory load(const std::string& path);

 private:
  mutable std::shared_mutex mutex_;
  std::vector<SkillRecord> skills_;  // in save order
};

/// The user-specified desired arrangement.
struct GoalScene {
  ObjectPoses objects;
};

nlohmann::json to_json(const GoalScene& g);
GoalScene goal_scene_from_json(const nlohmann::json& j);

struct SkillMatch {
  std::string skill;
  ObjectId target;  // scene object matched to the skill's target
  ObjectId anchor;  // skill's goal object when present, else nearest non-memorized
  Pose7 new_goal;   // desired target pose in the anchor frame
  bool goal_object_found = false;
};

struct AdaptedGoal {
  std::vector<SkillMatch> matches;  // scene object order
};

/// Decides whether a scene object is an instance of a memorized target.
using ObjectMatcher = std::function<bool(const ObjectId& scene, const ObjectId& memorized)>;
bool match_by_id(const ObjectId& scene, const ObjectId& memorized);

/// Matches every scene object against memorized targets and expresses its
/// desired pose in the anchor frame. No matches gives an empty result.
AdaptedGoal adapt_goal(const GoalScene& scene, const SkillMemory& memory,
                       const ObjectMatcher& matcher = match_by_id);

/// Re-targets a stored skill: OnGoal conditions get {anchor, new_goal};
/// actions relative to the goal object move to the anchor with
/// T' = N * P^-1 * T; target ids become the matched scene object.
SkillRecord reparameterize(const SkillRecord& r, const SkillMatch& m);

/// Root Sequence (with memory) over the re-parameterized trees: matches whose goal object
/// was found first, then by target id. Action indices are offset in order.
Program composite_bt(const AdaptedGoal& adapted, const SkillMemory& memory);

/// Executable form of a single stored skill.
Program program_of(const SkillRecord& r);

}  // namespace cobt
