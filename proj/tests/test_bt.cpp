#include "cobt/bt.hpp"
#include "cobt/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <array>
#include <regex>
#include <sstream>

namespace cobt {
namespace {

Condition leaf(StateVariable v, const std::string& expected, const ObjectId& subject = {}) {
  Condition c;
  c.variable = v;
  c.expected = expected;
  c.subject = subject;
  return c;
}

using G = GripperState;
using O = ObjectState;
using E = EndEffectorState;
using Row = std::vector<std::string>;

std::vector<Row> describe_all(const ActionConstraintTuple& t) {
  std::vector<Row> out;
  for (const auto& e : t.entries) {
    Row r;
    for (const auto& c : e.conditions) r.push_back(describe(c));
    out.push_back(r);
  }
  return out;
}

const std::vector<Row> kDrawerGolden{{"e(Near)"},
                                     {"g(Closed)", "e(Near)"},
                                     {"o(OnGoal)", "e(Near)"},
                                     {"g(Open)", "o(OnGoal)"},
                                     {"o(OnGoal)", "e(NotNear)"}};

TEST(CondAbstraction, DrawerGoldenTuple) {
  const auto& r = test::learned("drawer");
  EXPECT_EQ(describe_all(r.tuple), kDrawerGolden);
  for (std::size_t k = 0; k < r.tuple.entries.size(); ++k) {
    EXPECT_EQ(r.tuple.entries[k].action_index, static_cast<int>(k) + 1);
  }
}

TEST(CondAbstraction, SingleChange) {
  const std::vector<SymbolicState> s{{G::kOpen, O::kNone, E::kNotNear}, {G::kOpen, O::kNone, E::kNear}};
  EXPECT_EQ(describe_all(cond_abstraction(s, 1)), (std::vector<Row>{{"e(Near)"}}));
}

TEST(CondAbstraction, GripperOnlyFlip) {
  const std::vector<SymbolicState> s{{G::kOpen, O::kNone, E::kNear}, {G::kClosed, O::kNone, E::kNear}};
  EXPECT_EQ(describe_all(cond_abstraction(s, 1)), (std::vector<Row>{{"g(Closed)"}}));
}

TEST(CondAbstraction, Errors) {
  const std::vector<SymbolicState> same{{G::kOpen, O::kNone, E::kNear}, {G::kOpen, O::kNone, E::kNear}};
  EXPECT_THROW(cond_abstraction(same, 1), ValidationError);
  const std::vector<SymbolicState> two{{G::kOpen, O::kNone, E::kNear}, {G::kClosed, O::kNone, E::kNear}};
  EXPECT_THROW(cond_abstraction(two, 2), ValidationError);
  EXPECT_THROW(cond_abstraction({two[0]}, 0), ValidationError);
}

TEST(CondAbstraction, BindsSubjectsAndGoal) {
  const std::vector<SymbolicState> s{{G::kOpen, O::kNone, E::kNotNear}, {G::kOpen, O::kOnGoal, E::kNear}};
  const GoalSpec goal{"tray", Pose7(0.01, 0, 0.02)};
  const auto t = cond_abstraction(s, 1, {"cube", goal, 0.04});
  ASSERT_EQ(t.entries[0].conditions.size(), 2u);
  for (const auto& c : t.entries[0].conditions) {
    EXPECT_EQ(c.subject, "cube");
    EXPECT_DOUBLE_EQ(c.threshold, 0.04);
  }
  EXPECT_EQ(t.entries[0].conditions[0].goal, goal);
  EXPECT_FALSE(t.entries[0].conditions[1].goal.has_value());
}

/// Independent count: variable changes per boundary plus the spatial
/// changes of the latest spatially changing boundary that persist.
std::size_t expected_condition_count(const std::vector<SymbolicState>& s) {
  auto diff = [&](std::size_t b) {
    return std::array<bool, 3>{s[b].g != s[b - 1].g, s[b].o != s[b - 1].o, s[b].e != s[b - 1].e};
  };
  std::size_t total = 0;
  std::optional<std::array<bool, 3>> last_spatial;
  for (std::size_t b = 1; b < s.size(); ++b) {
    const auto d = diff(b);
    total += static_cast<std::size_t>(d[0] + d[1] + d[2]);
    if (last_spatial) {
      for (int v = 1; v < 3; ++v) total += ((*last_spatial)[v] && !d[v]) ? 1 : 0;
    }
    if (d[1] || d[2]) last_spatial = d;
  }
  return total;
}

std::vector<SymbolicState> random_states(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> u2(0, 1), u3(0, 2);
  std::vector<SymbolicState> s;
  while (s.size() < n) {
    SymbolicState x{static_cast<G>(u2(rng)), static_cast<O>(u3(rng)), static_cast<E>(u2(rng))};
    if (s.empty() || !(x == s.back())) s.push_back(x);
  }
  return s;
}

void check_shape(const BTNode& n, std::size_t& fallbacks) {
  if (n.kind == NodeKind::kFallback) {
    ++fallbacks;
    ASSERT_EQ(n.children.size(), 2u);
    EXPECT_EQ(n.children[0].kind, NodeKind::kParallel);
    EXPECT_EQ(n.children[1].kind, NodeKind::kSequence);
  }
  for (const auto& c : n.children) check_shape(c, fallbacks);
}

TEST(CondToTree, ShapeAndConservationOnRandomStates) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_states(rng, 2 + trial % 8);
    const auto t = cond_abstraction(s, s.size() - 1);
    const BTNode tree = cond_to_tree(t);
    std::size_t fallbacks = 0;
    check_shape(tree, fallbacks);
    EXPECT_EQ(fallbacks, s.size() - 1);
    EXPECT_EQ(count_kind(tree, NodeKind::kAction), s.size() - 1);
    EXPECT_EQ(count_kind(tree, NodeKind::kCondition), expected_condition_count(s));
    std::size_t in_tuple = 0;
    for (const auto& e : t.entries) in_tuple += e.conditions.size();
    EXPECT_EQ(count_kind(tree, NodeKind::kCondition), in_tuple);
    EXPECT_EQ(tree, cond_to_tree(cond_abstraction(s, s.size() - 1)));
  }
}

TEST(CondToTree, BaseCase) {
  ActionConstraintTuple t;
  t.entries.push_back({1, {leaf(StateVariable::kEndEffector, "Near", "cube")}});
  const BTNode tree = cond_to_tree(t);
  ASSERT_EQ(tree.kind, NodeKind::kFallback);
  EXPECT_EQ(tree.children[0].kind, NodeKind::kParallel);
  EXPECT_EQ(tree.children[0].children.size(), 1u);
  ASSERT_EQ(tree.children[1].children.size(), 1u);
  EXPECT_EQ(tree.children[1].children[0].action, 1);
}

TEST(CondToTree, TwoEntriesNest) {
  ActionConstraintTuple t;
  t.entries.push_back({1, {leaf(StateVariable::kEndEffector, "Near", "cube")}});
  t.entries.push_back({2, {leaf(StateVariable::kGripper, "Closed")}});
  const BTNode tree = cond_to_tree(t);
  ASSERT_EQ(tree.kind, NodeKind::kFallback);
  EXPECT_EQ(tree.children[0].children[0].condition->expected, "Closed");
  const BTNode& seq = tree.children[1];
  ASSERT_EQ(seq.children.size(), 2u);
  EXPECT_EQ(seq.children[0].kind, NodeKind::kFallback);
  EXPECT_EQ(seq.children[0].children[0].children[0].condition->expected, "Near");
  EXPECT_EQ(seq.children[1].action, 2);
  EXPECT_EQ(action_indices(tree), (std::vector<int>{1, 2}));
}

TEST(CondToTree, EmptyTupleThrows) { EXPECT_THROW(cond_to_tree({}), ValidationError); }

TEST(CondToTree, IdsArePreOrder) {
  const BTNode& tree = test::learned("drawer").record.tree;
  int expected = 0;
  std::function<void(const BTNode&)> walk = [&](const BTNode& n) {
    EXPECT_EQ(n.id, expected++);
    for (const auto& c : n.children) walk(c);
  };
  walk(tree);
}

TEST(GenerateBt, DrawerCounts) {
  const BTNode& tree = test::learned("drawer").record.tree;
  EXPECT_EQ(count_kind(tree, NodeKind::kAction), 5u);
  EXPECT_EQ(count_kind(tree, NodeKind::kCondition), 9u);  // 1 + 2 + 2 + 2 + 2
  EXPECT_EQ(count_kind(tree, NodeKind::kFallback), 5u);
  EXPECT_EQ(count_nodes(tree), 29u);
  EXPECT_NO_THROW(validate_tree(tree, 5));
}

TEST(GenerateBt, PickAndPlaceActions) {
  const auto& r = test::learned("pnp");
  EXPECT_EQ(count_kind(r.record.tree, NodeKind::kAction), r.actions.size());
  EXPECT_EQ(r.record.target_object, "cube");
  EXPECT_EQ(r.record.goal_object, "tray");
  // Demonstrated goal pose: the final cube pose in the tray frame.
  const auto& last = test::fixture_demo("pnp").samples.back();
  const Pose7 g = last.objects.at("tray").inverse().compose(last.objects.at("cube"));
  EXPECT_LT(pose_distance(r.record.demo_goal_pose, g), 1e-12);
}

TEST(GenerateBt, EmptySegmentationThrows) {
  const Demonstration& d = test::fixture_demo("pnp");
  SegmentedDataset seg;
  seg.target_object = "cube";
  seg.goal_object = "tray";
  EXPECT_THROW(generate_bt(d, seg, {}), ValidationError);
}

std::size_t dot_nodes(const std::string& dot) {
  const std::regex node(R"(^\s*n\d+ \[)");
  std::size_t n = 0;
  std::istringstream in(dot);
  for (std::string line; std::getline(in, line);) n += std::regex_search(line, node) ? 1 : 0;
  return n;
}

TEST(ExportDot, NodeCountsAndDeterminism) {
  const BTNode& tree = test::learned("drawer").record.tree;
  const std::string dot = export_dot(tree);
  EXPECT_EQ(dot.rfind("digraph", 0), 0u);
  EXPECT_EQ(dot_nodes(dot), 20u);
  EXPECT_EQ(dot, export_dot(tree));

  ActionConstraintTuple t;
  t.entries.push_back({1, {leaf(StateVariable::kGripper, "Closed")}});
  BTNode single;
  single.kind = NodeKind::kSequence;
  BTNode a;
  a.kind = NodeKind::kAction;
  a.action = 1;
  single.children.push_back(a);
  assign_ids(single);
  EXPECT_EQ(dot_nodes(export_dot(single)), 2u);
}

TEST(TreeJson, RoundTripAndShape) {
  const BTNode& tree = test::learned("drawer").record.tree;
  const auto j = to_json(tree);
  EXPECT_EQ(j.at("kind"), "Fallback");
  EXPECT_TRUE(j.at("condition").is_null());
  EXPECT_TRUE(j.at("action").is_null());
  EXPECT_EQ(j.at("id"), 0);
  EXPECT_EQ(tree_from_json(nlohmann::json::parse(j.dump())), tree);
}

TEST(TreeJson, RejectsMalformedTrees) {
  EXPECT_THROW(tree_from_json({{"kind", "Bogus"}, {"children", nlohmann::json::array()}}), ValidationError);
  nlohmann::json empty_fallback = {{"kind", "Fallback"}, {"children", nlohmann::json::array()}, {"id", 0}};
  EXPECT_THROW(validate_tree(tree_from_json(empty_fallback), 0), ValidationError);
}

TEST(ValidateTree, ChecksActionCoverage) {
  const BTNode& tree = test::learned("drawer").record.tree;
  EXPECT_THROW(validate_tree(tree, 4), ValidationError);
  EXPECT_THROW(validate_tree(tree, 6), ValidationError);
}

TEST(Layout, PreconditionsInSequenceVariant) {
  const auto& r = test::learned("drawer");
  const BTNode alt = cond_to_tree(r.tuple, TreeLayout::kPreconditionsInSequence);
  EXPECT_EQ(count_kind(alt, NodeKind::kCondition), 9u);
  EXPECT_EQ(count_kind(alt, NodeKind::kAction), 5u);
  // A2's carried e(Near) moves into its Sequence ahead of the action.
  std::size_t seq_conditions = 0;
  std::function<void(const BTNode&)> walk = [&](const BTNode& n) {
    if (n.kind == NodeKind::kSequence) {
      for (const auto& c : n.children) seq_conditions += c.kind == NodeKind::kCondition ? 1 : 0;
    }
    for (const auto& c : n.children) walk(c);
  };
  walk(alt);
  EXPECT_EQ(seq_conditions, 4u);  // one carried pre-condition per action 2..5
}

}  // namespace
}  // namespace cobt
