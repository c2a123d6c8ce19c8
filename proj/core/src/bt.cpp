#include "cobt/bt.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <algorithm>
#include <array>
#include <sstream>

namespace cobt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("bt-core", msg); }

std::string symbol(const SymbolicState& s, StateVariable v) {
  switch (v) {
    case StateVariable::kGripper:
      return to_string(s.g);
    case StateVariable::kObject:
      return to_string(s.o);
    case StateVariable::kEndEffector:
      break;
  }
  return to_string(s.e);
}

constexpr std::array<StateVariable, 3> kVariableOrder = {
    StateVariable::kGripper, StateVariable::kObject, StateVariable::kEndEffector};

Condition bind(StateVariable v, std::string expected, ConditionRole role,
               const ConditionContext& ctx) {
  Condition c;
  c.variable = v;
  c.expected = std::move(expected);
  c.role = role;
  c.threshold = ctx.threshold;
  if (v != StateVariable::kGripper) c.subject = ctx.target;
  if (v == StateVariable::kObject && c.expected == "OnGoal") c.goal = ctx.goal;
  return c;
}

BTNode leaf(NodeKind kind) {
  BTNode n;
  n.kind = kind;
  return n;
}

void collect_actions(const BTNode& n, std::vector<int>& out) {
  if (n.kind == NodeKind::kAction && n.action) out.push_back(*n.action);
  for (const auto& c : n.children) collect_actions(c, out);
}

void assign_ids_from(BTNode& n, int& next) {
  n.id = next++;
  for (auto& c : n.children) assign_ids_from(c, next);
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

void emit_dot(const BTNode& n, std::ostringstream& os) {
  std::string label;
  std::string shape = "box";
  switch (n.kind) {
    case NodeKind::kFallback:
      label = "?";
      shape = "diamond";
      break;
    case NodeKind::kSequence:
      label = n.memory ? "->*" : "->";
      break;
    case NodeKind::kParallel: {
      label = "=>";
      for (const auto& c : n.children) {
        if (c.kind == NodeKind::kCondition && c.condition) label += "\\n" + describe(*c.condition);
      }
      shape = "parallelogram";
      break;
    }
    case NodeKind::kCondition:
      label = n.condition ? describe(*n.condition) : "cond";
      shape = "ellipse";
      break;
    case NodeKind::kAction:
      label = "Action " + std::to_string(n.action.value_or(0));
      shape = "box";
      break;
  }
  os << "  n" << n.id << " [label=\"" << dot_escape(label) << "\", shape=" << shape << "];\n";
  for (const auto& c : n.children) {
    if (n.kind == NodeKind::kParallel && c.kind == NodeKind::kCondition) continue;
    os << "  n" << n.id << " -> n" << c.id << ";\n";
    emit_dot(c, os);
  }
}

}  // namespace

std::string to_string(StateVariable v) {
  switch (v) {
    case StateVariable::kGripper:
      return "Gripper";
    case StateVariable::kObject:
      return "Object";
    case StateVariable::kEndEffector:
      break;
  }
  return "EndEffector";
}

std::string to_string(ConditionRole r) {
  return r == ConditionRole::kEffect ? "effect" : "precondition";
}

std::string describe(const Condition& c) {
  const char* var = c.variable == StateVariable::kGripper  ? "g"
                    : c.variable == StateVariable::kObject ? "o"
                                                           : "e";
  return std::string(var) + "(" + c.expected + ")";
}

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::kFallback:
      return "Fallback";
    case NodeKind::kSequence:
      return "Sequence";
    case NodeKind::kParallel:
      return "Parallel";
    case NodeKind::kCondition:
      return "Condition";
    case NodeKind::kAction:
      break;
  }
  return "Action";
}

ActionConstraintTuple cond_abstraction(const std::vector<SymbolicState>& states,
                                       std::size_t action_count, const ConditionContext& ctx) {
  if (states.size() < 2) fail("need at least two boundary states");
  if (action_count != states.size() - 1) fail("action count must equal boundaries - 1");
  ActionConstraintTuple t;
  // Object/end-effector effects of the latest boundary that changed either.
  std::vector<StateVariable> carried;
  for (std::size_t b = 1; b < states.size(); ++b) {
    if (states[b] == states[b - 1]) {
      fail("adjacent identical states at boundaries " + std::to_string(b) + " and " +
           std::to_string(b + 1));
    }
    ConstraintEntry entry;
    entry.action_index = static_cast<int>(b);
    std::vector<StateVariable> changed_spatial;
    for (StateVariable v : kVariableOrder) {
      const bool changed = symbol(states[b], v) != symbol(states[b - 1], v);
      const bool is_carried = std::find(carried.begin(), carried.end(), v) != carried.end();
      if (changed) {
        entry.conditions.push_back(bind(v, symbol(states[b], v), ConditionRole::kEffect, ctx));
        if (v != StateVariable::kGripper) changed_spatial.push_back(v);
      } else if (is_carried) {
        entry.conditions.push_back(
            bind(v, symbol(states[b], v), ConditionRole::kPrecondition, ctx));
      }
    }
    if (!changed_spatial.empty()) carried = changed_spatial;
    t.entries.push_back(std::move(entry));
  }
  return t;
}

BTNode cond_to_tree(const ActionConstraintTuple& t, TreeLayout layout) {
  if (t.entries.empty()) fail("empty action/constraint tuple");
  std::optional<BTNode> tree;
  for (const auto& entry : t.entries) {
    BTNode parallel = leaf(NodeKind::kParallel);
    BTNode sequence = leaf(NodeKind::kSequence);
    if (tree) sequence.children.push_back(std::move(*tree));
    for (const auto& c : entry.conditions) {
      BTNode cond = leaf(NodeKind::kCondition);
      cond.condition = c;
      const bool to_sequence = layout == TreeLayout::kPreconditionsInSequence &&
                               c.role == ConditionRole::kPrecondition;
      (to_sequence ? sequence : parallel).children.push_back(std::move(cond));
    }
    if (parallel.children.empty()) fail("action " + std::to_string(entry.action_index) +
                                        " has no effect conditions");
    BTNode action = leaf(NodeKind::kAction);
    action.action = entry.action_index;
    sequence.children.push_back(std::move(action));
    BTNode fallback = leaf(NodeKind::kFallback);
    fallback.children.push_back(std::move(parallel));
    fallback.children.push_back(std::move(sequence));
    tree = std::move(fallback);
  }
  assign_ids(*tree);
  return std::move(*tree);
}

void assign_ids(BTNode& root) {
  int next = 0;
  assign_ids_from(root, next);
}

std::size_t count_nodes(const BTNode& root) {
  std::size_t n = 1;
  for (const auto& c : root.children) n += count_nodes(c);
  return n;
}

std::size_t count_kind(const BTNode& root, NodeKind kind) {
  std::size_t n = root.kind == kind ? 1 : 0;
  for (const auto& c : root.children) n += count_kind(c, kind);
  return n;
}

std::vector<int> action_indices(const BTNode& root) {
  std::vector<int> out;
  collect_actions(root, out);
  return out;
}

std::uint64_t structural_hash(const BTNode& root) {
  // FNV-1a over a pre-order (kind, arity) stream.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  auto walk = [&](const auto& self, const BTNode& n) -> void {
    mix(static_cast<std::uint64_t>(n.kind));
    mix(n.children.size());
    for (const auto& c : n.children) self(self, c);
  };
  walk(walk, root);
  return h;
}

void validate_tree(const BTNode& root, std::size_t action_count) {
  auto walk = [&](const auto& self, const BTNode& n) -> void {
    const bool leaf_kind = n.kind == NodeKind::kCondition || n.kind == NodeKind::kAction;
    if (leaf_kind && !n.children.empty()) fail("leaf node " + std::to_string(n.id) + " has children");
    if (!leaf_kind && n.children.empty()) fail("composite node " + std::to_string(n.id) + " is empty");
    if (n.kind == NodeKind::kCondition && !n.condition) fail("condition leaf without payload");
    if (n.kind == NodeKind::kAction) {
      if (!n.action || *n.action < 1 || static_cast<std::size_t>(*n.action) > action_count) {
        fail("action leaf references unknown action");
      }
    }
    for (const auto& c : n.children) self(self, c);
  };
  walk(walk, root);
  std::vector<int> seen = action_indices(root);
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != static_cast<int>(i) + 1) fail("action leaves do not cover 1.." + std::to_string(action_count) + " once each");
  }
  if (seen.size() != action_count) fail("tree has " + std::to_string(seen.size()) + " action leaves, expected " + std::to_string(action_count));
}

std::string export_dot(const BTNode& root) {
  std::ostringstream os;
  os << "digraph BT {\n  rankdir=TB;\n";
  emit_dot(root, os);
  os << "}\n";
  return os.str();
}

nlohmann::json to_json(const Condition& c) {
  nlohmann::json j = {{"variable", to_string(c.variable)},
                      {"expected", c.expected},
                      {"subject", c.subject},
                      {"threshold", c.threshold},
                      {"role", to_string(c.role)},
                      {"goal", nullptr}};
  if (c.goal) j["goal"] = {{"anchor", c.goal->anchor}, {"pose", pose_to_json(c.goal->pose)}};
  return j;
}

Condition condition_from_json(const nlohmann::json& j) {
  Condition c;
  try {
    const auto var = j.at("variable").get<std::string>();
    if (var == "Gripper") c.variable = StateVariable::kGripper;
    else if (var == "Object") c.variable = StateVariable::kObject;
    else if (var == "EndEffector") c.variable = StateVariable::kEndEffector;
    else fail("unknown condition variable '" + var + "'");
    c.expected = j.at("expected").get<std::string>();
    c.subject = j.value("subject", "");
    c.threshold = j.value("threshold", kDefaultThreshold);
    c.role = j.value("role", "effect") == "precondition" ? ConditionRole::kPrecondition
                                                          : ConditionRole::kEffect;
    if (j.contains("goal") && !j["goal"].is_null()) {
      c.goal = GoalSpec{j["goal"].at("anchor").get<std::string>(),
                        pose_from_json(j["goal"].at("pose"))};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed condition: ") + e.what());
  }
  // Reject symbols outside the variable's domain.
  switch (c.variable) {
    case StateVariable::kGripper:
      gripper_state_from(c.expected);
      break;
    case StateVariable::kObject:
      object_state_from(c.expected);
      break;
    case StateVariable::kEndEffector:
      end_effector_state_from(c.expected);
      break;
  }
  if (!(c.threshold > 0.0)) fail("condition threshold must be > 0");
  return c;
}

nlohmann::json to_json(const BTNode& n) {
  nlohmann::json children = nlohmann::json::array();
  for (const auto& c : n.children) children.push_back(to_json(c));
  return {{"kind", to_string(n.kind)},
          {"children", children},
          {"condition", n.condition ? to_json(*n.condition) : nlohmann::json(nullptr)},
          {"action", n.action ? nlohmann::json(*n.action) : nlohmann::json(nullptr)},
          {"id", n.id},
          {"memory", n.memory}};
}

BTNode tree_from_json(const nlohmann::json& j) {
  BTNode n;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "Fallback") n.kind = NodeKind::kFallback;
    else if (kind == "Sequence") n.kind = NodeKind::kSequence;
    else if (kind == "Parallel") n.kind = NodeKind::kParallel;
    else if (kind == "Condition") n.kind = NodeKind::kCondition;
    else if (kind == "Action") n.kind = NodeKind::kAction;
    else fail("unknown node kind '" + kind + "'");
    for (const auto& c : j.at("children")) n.children.push_back(tree_from_json(c));
    if (j.contains("condition") && !j["condition"].is_null()) {
      n.condition = condition_from_json(j["condition"]);
    }
    if (j.contains("action") && !j["action"].is_null()) n.action = j["action"].get<int>();
    n.id = j.value("id", 0);
    n.memory = j.value("memory", false);
    if (n.memory && n.kind != NodeKind::kSequence) fail("memory is only valid on sequences");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed tree: ") + e.what());
  }
  return n;
}

nlohmann::json to_json(const ActionConstraintTuple& t) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : t.entries) {
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : e.conditions) conds.push_back(to_json(c));
    arr.push_back({{"action", e.action_index}, {"conditions", conds}});
  }
  return arr;
}

GeneratedBT generate_bt(const Demonstration& demo, const SegmentedDataset& seg,
                        const std::vector<PrimitiveAction>& actions, TreeLayout layout,
                        double threshold) {
  if (seg.action_count() == 0 || actions.empty()) fail("nothing to generate: empty tuple");
  if (actions.size() != seg.action_count()) fail("actions do not match segmentation");
  GeneratedBT out;
  out.record.target_object = seg.target_object;
  out.record.goal_object = seg.goal_object;
  out.record.demo_goal_pose = demo_goal_pose(demo, seg.target_object, seg.goal_object);
  ConditionContext ctx;
  ctx.target = seg.target_object;
  ctx.goal = GoalSpec{seg.goal_object, out.record.demo_goal_pose};
  ctx.threshold = threshold;
  out.tuple = cond_abstraction(seg.states, seg.action_count(), ctx);
  out.tree = cond_to_tree(out.tuple, layout);
  validate_tree(out.tree, actions.size());
  out.record.tree = out.tree;
  out.record.actions = actions;
  return out;
}

}  // namespace cobt
