#pragma once

#include "cobt/primitives.hpp"
#include "cobt/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cobt {

enum class StateVariable { kGripper, kObject, kEndEffector };

enum class ConditionRole { kEffect, kPrecondition };

/// Where an object must sit for an OnGoal condition: `pose` in `anchor`'s frame.
struct GoalSpec {
  ObjectId anchor;
  Pose7 pose;
  bool operator==(const GoalSpec&) const = default;
};

struct Condition {
  StateVariable variable = StateVariable::kGripper;
  std::string expected;  // "Open"/"Closed", "Near"/"OnGoal"/"None", "Near"/"NotNear"
  ObjectId subject;      // object the predicate is about (Object/EndEffector)
  double threshold = kDefaultThreshold;
  ConditionRole role = ConditionRole::kEffect;
  std::optional<GoalSpec> goal;  // OnGoal only

  bool operator==(const Condition&) const = default;
};

std::string to_string(StateVariable v);
std::string to_string(ConditionRole r);
/// Short human form, e.g. "e(Near)".
std::string describe(const Condition& c);

struct ConstraintEntry {
  int action_index = 1;
  std::vector<Condition> conditions;  // ordered g, o, e
};

/// The action/constraint tuple: one entry per action, in action order.
struct ActionConstraintTuple {
  std::vector<ConstraintEntry> entries;
};

/// Object binding used to fill in condition subjects and goals.
struct ConditionContext {
  ObjectId target;
  std::optional<GoalSpec> goal;
  double threshold = kDefaultThreshold;
};

/// Each action's constraint vector holds the variables that changed across
/// its segment (effects) plus the most recent object/end-effector effects that
/// are still in force (carried pre-conditions). Gripper effects are not carried.
ActionConstraintTuple cond_abstraction(const std::vector<SymbolicState>& states,
                                       std::size_t action_count,
                                       const ConditionContext& ctx = {});

enum class NodeKind { kFallback, kSequence, kParallel, kCondition, kAction };

std::string to_string(NodeKind k);

struct BTNode {
  NodeKind kind = NodeKind::kSequence;
  std::vector<BTNode> children;
  std::optional<Condition> condition;  // kCondition
  std::optional<int> action;           // kAction
  int id = 0;
  /// kSequence only: resume at the running child instead of re-ticking
  /// children that already succeeded.
  bool memory = false;

  bool operator==(const BTNode&) const = default;
};

/// Where pre-conditions go when expanding an atomic tree.
enum class TreeLayout {
  /// Every condition of c^b under the Parallel (default).
  kConstraintsInParallel,
  /// Effects under the Parallel; carried pre-conditions inside the Sequence
  /// ahead of the action.
  kPreconditionsInSequence,
};

/// Chains atomic trees: for each entry, Fallback(Parallel(c^b),
/// Sequence(previous tree?, Action b)). Node ids are assigned pre-order.
BTNode cond_to_tree(const ActionConstraintTuple& t,
                    TreeLayout layout = TreeLayout::kConstraintsInParallel);

/// Renumbers ids 0..n-1 in pre-order.
void assign_ids(BTNode& root);

std::size_t count_nodes(const BTNode& root);
std::size_t count_kind(const BTNode& root, NodeKind kind);
/// Collects action indices in tree order.
std::vector<int> action_indices(const BTNode& root);
/// Hash over node kinds and arities only.
std::uint64_t structural_hash(const BTNode& root);
/// Checks node-arity invariants and that action leaves cover 1..action_count
/// exactly once; throws ValidationError when violated.
void validate_tree(const BTNode& root, std::size_t action_count);

/// Deterministic DOT digraph. Condition leaves directly under a Parallel are
/// folded into its label; other leaves are drawn as nodes.
std::string export_dot(const BTNode& root);

/// A learned skill as stored in memory: tree, primitives and the objects
/// it manipulates.
struct SkillRecord {
  std::string name;
  BTNode tree;
  std::vector<PrimitiveAction> actions;
  ObjectId target_object;
  ObjectId goal_object;
  /// Target pose in the goal object's frame at the end of the demonstration.
  Pose7 demo_goal_pose;
};

struct GeneratedBT {
  BTNode tree;
  ActionConstraintTuple tuple;
  SkillRecord record;  // draft; name left empty
};

/// cond_abstraction followed by cond_to_tree, packaged for memory.
GeneratedBT generate_bt(const Demonstration& demo, const SegmentedDataset& seg,
                        const std::vector<PrimitiveAction>& actions,
                        TreeLayout layout = TreeLayout::kConstraintsInParallel,
                        double threshold = kDefaultThreshold);

nlohmann::json to_json(const Condition& c);
Condition condition_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BTNode& n);
BTNode tree_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ActionConstraintTuple& t);

}  // namespace cobt
