#pragma once

#include "cobt/bt.hpp"
#include "cobt/dmp.hpp"
#include "cobt/memory.hpp"
#include "cobt/runtime.hpp"
#include "cobt/segmenter.hpp"
#include "cobt/world.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cobt {

struct LearnOptions {
  SegmenterOptions segmenter;
  DmpTrainOptions dmp;
  TreeLayout layout = TreeLayout::kConstraintsInParallel;
};

struct LearnResult {
  SegmentedDataset segments;
  std::vector<PrimitiveAction> actions;
  ActionConstraintTuple tuple;
  SkillRecord record;
  double seconds = 0.0;  // segmentation through tree generation
};

/// segment -> learn_primitives -> generate_bt, timed.
LearnResult learn_skill(const Demonstration& demo, const ObjectId& target, const ObjectId& goal,
                        const std::string& name, const LearnOptions& opts = {});

/// Writes segments.json, actions.json, bt.json and bt.dot into `dir`.
void write_learn_artifacts(const LearnResult& r, const std::string& dir);

struct TrialResult {
  std::uint64_t seed = 0;
  bool success = false;
  long ticks = 0;
  std::map<int, int> retries;  // per action: executions - 1
  std::string error;
  int total_retries() const;
};

struct TrialReport {
  std::string skill;
  std::vector<TrialResult> trials;
  int successes = 0;
  double success_rate = 0.0;
  double mean_learn_seconds = 0.0;
};

nlohmann::json to_json(const TrialReport& r);

/// Builds the perturbation script of one trial from its randomized world.
using ScriptFactory = std::function<PerturbationScript(const WorldState&)>;

struct TrialOptions {
  int n = 20;
  std::uint64_t seed = 0;  // trial i uses seed + i
  std::optional<Area> area;  // default: the scene's area
  SessionConfig session;
  ScriptFactory script;       // optional
  double learn_seconds = 0.0;  // reported as the mean learn time
};

/// Runs `program` on n randomized copies of `scene`.
TrialReport run_trials(const std::string& name, const Program& program, const Scene& scene,
                       const TrialOptions& opts);

/// Scripted perturbations from the reactivity suite.
enum class Scenario {
  /// Target moved 8 cm away from the goal while the first action runs.
  kTargetMovedDuringReach,
  /// Goal object moved 10 cm while the object is being carried.
  kGoalMovedBeforePlace,
  /// Target put back at its start pose while the final action runs.
  kResetAfterCompletion,
};

std::vector<Scenario> all_scenarios();
std::string to_string(Scenario s);
Scenario scenario_from(const std::string& s);
/// `carry_action` is the action that moves the grasped target to the goal.
PerturbationScript scenario_script(Scenario s, const WorldState& world, const ObjectId& target,
                                   const ObjectId& goal, int carry_action, int final_action);
/// Same, with the carry action read off the skill: the first action with an
/// effect "o(OnGoal)". The final action is the last one.
PerturbationScript scenario_script(Scenario s, const WorldState& world, const SkillRecord& skill);

}  // namespace cobt
