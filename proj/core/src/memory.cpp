#include "cobt/memory.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <algorithm>
#include <filesystem>
#include <limits>
#include <mutex>

namespace cobt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("skill-memory", msg); }

void offset_actions(BTNode& n, int offset) {
  if (n.kind == NodeKind::kAction && n.action) *n.action += offset;
  for (auto& c : n.children) offset_actions(c, offset);
}

void retarget_conditions(BTNode& n, const SkillRecord& r, const SkillMatch& m) {
  if (n.kind == NodeKind::kCondition && n.condition) {
    Condition& c = *n.condition;
    if (c.subject == r.target_object) c.subject = m.target;
    if (c.variable == StateVariable::kObject && c.goal) c.goal = GoalSpec{m.anchor, m.new_goal};
  }
  for (auto& c : n.children) retarget_conditions(c, r, m);
}

}  // namespace

void validate(const SkillRecord& r) {
  if (r.name.empty()) fail("skill without name");
  if (r.actions.empty()) fail("skill '" + r.name + "' has no actions");
  validate_tree(r.tree, r.actions.size());
  auto idx = action_indices(r.tree);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    if (idx.size() != r.actions.size() || idx[i] != static_cast<int>(i) + 1) {
      fail("skill '" + r.name + "': tree actions do not cover 1.." +
           std::to_string(r.actions.size()));
    }
  }
}

nlohmann::json to_json(const SkillRecord& r) {
  return {{"name", r.name},
          {"target", r.target_object},
          {"goal", r.goal_object},
          {"demo_goal_pose", pose_to_json(r.demo_goal_pose)},
          {"tree", to_json(r.tree)},
          {"actions", actions_to_json(r.actions)["actions"]}};
}

SkillRecord skill_from_json(const nlohmann::json& j) {
  SkillRecord r;
  try {
    r.name = j.at("name").get<std::string>();
    r.target_object = j.at("target").get<std::string>();
    r.goal_object = j.at("goal").get<std::string>();
    r.demo_goal_pose = pose_from_json(j.at("demo_goal_pose"));
    r.tree = tree_from_json(j.at("tree"));
    r.actions = actions_from_json(j.at("actions"));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed skill record: ") + e.what());
  }
  validate(r);
  return r;
}

SkillMemory::SkillMemory(const SkillMemory& other) {
  std::shared_lock lock(other.mutex_);
  skills_ = other.skills_;
}

SkillMemory& SkillMemory::operator=(const SkillMemory& other) {
  if (this == &other) return *this;
  std::vector<SkillRecord> copy;
  {
    std::shared_lock lock(other.mutex_);
    copy = other.skills_;
  }
  std::unique_lock lock(mutex_);
  skills_ = std::move(copy);
  return *this;
}

void SkillMemory::save_skill(SkillRecord record) {
  validate(record);
  std::unique_lock lock(mutex_);
  for (const auto& s : skills_) {
    if (s.name == record.name) fail("duplicate skill name '" + record.name + "'");
  }
  skills_.push_back(std::move(record));
}

std::optional<SkillRecord> SkillMemory::by_name(const std::string& name) const {
  std::shared_lock lock(mutex_);
  for (const auto& s : skills_) {
    if (s.name == name) return s;
  }
  return std::nullopt;
}

std::optional<SkillRecord> SkillMemory::by_target(const ObjectId& target) const {
  std::shared_lock lock(mutex_);
  for (auto it = skills_.rbegin(); it != skills_.rend(); ++it) {
    if (it->target_object == target) return *it;
  }
  return std::nullopt;
}

std::vector<SkillRecord> SkillMemory::records() const {
  std::shared_lock lock(mutex_);
  return skills_;
}

std::vector<std::string> SkillMemory::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& s : skills_) out.push_back(s.name);
  return out;
}

bool SkillMemory::empty() const {
  std::shared_lock lock(mutex_);
  return skills_.empty();
}

std::size_t SkillMemory::size() const {
  std::shared_lock lock(mutex_);
  return skills_.size();
}

bool SkillMemory::memorized_target(const ObjectId& id) const {
  std::shared_lock lock(mutex_);
  return std::any_of(skills_.begin(), skills_.end(),
                     [&id](const SkillRecord& s) { return s.target_object == id; });
}

nlohmann::json SkillMemory::to_json() const {
  std::shared_lock lock(mutex_);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : skills_) arr.push_back(cobt::to_json(s));
  return {{"format", kMemoryFormat}, {"skills", arr}};
}

SkillMemory SkillMemory::from_json(const nlohmann::json& j) {
  SkillMemory m;
  if (j.is_null()) return m;
  if (!j.is_object() || !j.contains("skills") || !j["skills"].is_array()) {
    fail("memory file must be {\"skills\": [...]}");
  }
  for (const auto& s : j["skills"]) m.save_skill(skill_from_json(s));
  return m;
}

void SkillMemory::save(const std::string& path) const { write_json_file_atomic(path, to_json()); }

SkillMemory SkillMemory::load(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec) || std::filesystem::file_size(path, ec) == 0) {
    return {};
  }
  return from_json(read_json_file(path, "skill-memory"));
}

nlohmann::json to_json(const GoalScene& g) {
  nlohmann::json objs = nlohmann::json::object();
  for (const auto& [id, p] : g.objects) objs[id] = pose_to_json(p);
  return {{"objects", objs}};
}

GoalScene goal_scene_from_json(const nlohmann::json& j) {
  GoalScene g;
  try {
    for (const auto& [id, p] : j.at("objects").items()) g.objects[id] = pose_from_json(p);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed goal scene: ") + e.what());
  }
  if (g.objects.empty()) fail("goal scene is empty");
  return g;
}

bool match_by_id(const ObjectId& scene, const ObjectId& memorized) { return scene == memorized; }

AdaptedGoal adapt_goal(const GoalScene& scene, const SkillMemory& memory,
                       const ObjectMatcher& matcher) {
  if (memory.empty()) fail("memory is empty");
  if (scene.objects.empty()) fail("goal scene is empty");
  const auto skills = memory.records();
  // For every scene object, the most recently saved matching skill.
  std::map<ObjectId, const SkillRecord*> found;
  for (const auto& [id, pose] : scene.objects) {
    for (auto it = skills.rbegin(); it != skills.rend(); ++it) {
      if (matcher(id, it->target_object)) {
        found[id] = &*it;
        break;
      }
    }
  }
  AdaptedGoal out;
  for (const auto& [id, skill] : found) {
    SkillMatch m;
    m.skill = skill->name;
    m.target = id;
    const Pose7& desired = scene.objects.at(id);
    if (scene.objects.count(skill->goal_object) && !found.count(skill->goal_object)) {
      m.anchor = skill->goal_object;
      m.goal_object_found = true;
    } else {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& [other, pose] : scene.objects) {
        if (found.count(other)) continue;
        const double d = pose_distance(desired, pose);
        if (d < best) {
          best = d;
          m.anchor = other;
        }
      }
      if (m.anchor.empty()) fail("no non-memorized object to anchor '" + id + "'");
    }
    m.new_goal = scene.objects.at(m.anchor).inverse().compose(desired);
    out.matches.push_back(std::move(m));
  }
  return out;
}

SkillRecord reparameterize(const SkillRecord& r, const SkillMatch& m) {
  SkillRecord out = r;
  retarget_conditions(out.tree, r, m);
  const Pose7 shift = m.new_goal.compose(r.demo_goal_pose.inverse());
  for (auto& a : out.actions) {
    if (a.relative_object == r.goal_object) {
      a.relative_object = m.anchor;
      a.end_transform = shift.compose(a.end_transform);
      a.start_transform = shift.compose(a.start_transform);
    } else if (a.relative_object == r.target_object) {
      a.relative_object = m.target;
    }
  }
  out.target_object = m.target;
  out.goal_object = m.anchor;
  out.demo_goal_pose = m.new_goal;
  return out;
}

Program composite_bt(const AdaptedGoal& adapted, const SkillMemory& memory) {
  if (adapted.matches.empty()) fail("composite needs at least one match");
  std::vector<const SkillMatch*> order;
  for (const auto& m : adapted.matches) order.push_back(&m);
  std::stable_sort(order.begin(), order.end(), [](const SkillMatch* a, const SkillMatch* b) {
    if (a->goal_object_found != b->goal_object_found) return a->goal_object_found;
    return a->target < b->target;
  });
  Program p;
  p.tree.kind = NodeKind::kSequence;
  // A finished sub-skill is not re-ticked: its e(!Near) effect sits exactly
  // on the threshold when the next skill starts moving.
  p.tree.memory = true;
  for (const SkillMatch* m : order) {
    auto skill = memory.by_name(m->skill);
    if (!skill) fail("unknown skill '" + m->skill + "'");
    SkillRecord r = reparameterize(*skill, *m);
    const int offset = static_cast<int>(p.actions.size());
    offset_actions(r.tree, offset);
    for (auto& a : r.actions) {
      a.index += offset;
      p.actions.push_back(std::move(a));
    }
    p.tree.children.push_back(std::move(r.tree));
  }
  assign_ids(p.tree);
  validate_tree(p.tree, p.actions.size());
  return p;
}

Program program_of(const SkillRecord& r) {
  validate(r);
  return Program{r.tree, r.actions};
}

}  // namespace cobt
