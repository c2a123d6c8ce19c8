#include "cobt/pipeline.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"
#include "cobt/primitives.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace cobt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("gateway", msg); }

Eigen::Vector3d planar_unit(const Eigen::Vector3d& v) {
  Eigen::Vector3d u(v.x(), v.y(), 0.0);
  const double n = u.norm();
  return n < 1e-9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d(u / n);
}

}  // namespace

LearnResult learn_skill(const Demonstration& demo, const ObjectId& target, const ObjectId& goal,
                        const std::string& name, const LearnOptions& opts) {
  if (name.empty()) fail("skill name required");
  const auto t0 = std::chrono::steady_clock::now();
  LearnResult r;
  r.segments = segment(demo, target, goal, opts.segmenter);
  r.actions = learn_primitives(demo, r.segments, opts.dmp);
  GeneratedBT g = generate_bt(demo, r.segments, r.actions, opts.layout, opts.segmenter.threshold);
  r.tuple = std::move(g.tuple);
  r.record = std::move(g.record);
  r.record.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

void write_learn_artifacts(const LearnResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_json_file_atomic((d / "segments.json").string(), to_json(r.segments));
  write_json_file_atomic((d / "actions.json").string(), actions_to_json(r.actions));
  nlohmann::json bt = {{"skill", r.record.name},
                       {"target", r.record.target_object},
                       {"goal", r.record.goal_object},
                       {"tuple", to_json(r.tuple)},
                       {"tree", to_json(r.record.tree)}};
  write_json_file_atomic((d / "bt.json").string(), bt);
  std::ofstream dot(d / "bt.dot");
  if (!dot) fail("cannot write bt.dot in '" + dir + "'");
  dot << export_dot(r.record.tree);
}

int TrialResult::total_retries() const {
  int n = 0;
  for (const auto& [a, r] : retries) n += r;
  return n;
}

nlohmann::json to_json(const TrialReport& r) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& t : r.trials) {
    nlohmann::json retries = nlohmann::json::object();
    for (const auto& [a, n] : t.retries) retries[std::to_string(a)] = n;
    nlohmann::json j = {{"seed", t.seed}, {"success", t.success}, {"ticks", t.ticks},
                        {"retries", retries}};
    if (!t.error.empty()) j["error"] = t.error;
    trials.push_back(j);
  }
  return {{"skill", r.skill},
          {"trials", trials},
          {"successes", r.successes},
          {"n", r.trials.size()},
          {"success_rate", r.success_rate},
          {"mean_learn_seconds", r.mean_learn_seconds}};
}

TrialReport run_trials(const std::string& name, const Program& program, const Scene& scene,
                       const TrialOptions& opts) {
  if (opts.n < 1) fail("trial count must be >= 1");
  TrialReport report;
  report.skill = name;
  const Area area = opts.area.value_or(scene.area);
  for (int i = 0; i < opts.n; ++i) {
    TrialResult t;
    t.seed = opts.seed + static_cast<std::uint64_t>(i);
    const WorldState world = randomize_scene(scene, area, t.seed);
    PerturbationScript script = opts.script ? opts.script(world) : PerturbationScript{};
    ExecutionSession session(program, world, opts.session, std::move(script));
    try {
      session.run_to_completion();
    } catch (const Error& e) {
      t.error = e.what();
    }
    const auto& trace = session.trace();
    t.success = trace.success;
    t.ticks = trace.ticks();
    for (const auto& [a, n] : trace.executions) t.retries[a] = std::max(0, n - 1);
    report.successes += t.success ? 1 : 0;
    report.trials.push_back(std::move(t));
  }
  report.success_rate = static_cast<double>(report.successes) / static_cast<double>(opts.n);
  report.mean_learn_seconds = opts.learn_seconds;
  return report;
}

std::vector<Scenario> all_scenarios() {
  return {Scenario::kTargetMovedDuringReach, Scenario::kGoalMovedBeforePlace,
          Scenario::kResetAfterCompletion};
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kTargetMovedDuringReach:
      return "target-moved-during-reach";
    case Scenario::kGoalMovedBeforePlace:
      return "goal-moved-before-place";
    case Scenario::kResetAfterCompletion:
      break;
  }
  return "reset-after-completion";
}

Scenario scenario_from(const std::string& s) {
  for (Scenario c : all_scenarios()) {
    if (to_string(c) == s) return c;
  }
  fail("unknown scenario '" + s + "'");
}

PerturbationScript scenario_script(Scenario s, const WorldState& world, const ObjectId& target,
                                   const ObjectId& goal, int carry_action, int final_action) {
  const Eigen::Vector3d away =
      planar_unit(world.object(target).position - world.object(goal).position);
  PerturbationEntry e;
  switch (s) {
    case Scenario::kTargetMovedDuringReach:
      e.trigger = {PerturbationTrigger::Kind::kActionStart, 0, 1, 60};
      e.object = target;
      e.op = PerturbationEntry::Op::kOffset;
      e.offset = 0.08 * away;
      break;
    case Scenario::kGoalMovedBeforePlace:
      e.trigger = {PerturbationTrigger::Kind::kActionStart, 0, carry_action, 40};
      e.object = goal;
      e.op = PerturbationEntry::Op::kOffset;
      e.offset = -0.1 * away;
      break;
    case Scenario::kResetAfterCompletion:
      e.trigger = {PerturbationTrigger::Kind::kActionStart, 0, final_action, 10};
      e.object = target;
      e.op = PerturbationEntry::Op::kReset;
      break;
  }
  return PerturbationScript{{e}};
}

PerturbationScript scenario_script(Scenario s, const WorldState& world, const SkillRecord& skill) {
  const ExecutionSession probe(program_of(skill), world);
  const int n = static_cast<int>(skill.actions.size());
  int carry = 0;
  for (int a = 1; a <= n && carry == 0; ++a) {
    for (const auto& c : probe.effects(a)) {
      if (c.variable == StateVariable::kObject && c.expected == "OnGoal") carry = a;
    }
  }
  if (carry == 0) fail("skill '" + skill.name + "' has no action placing its target");
  return scenario_script(s, world, skill.target_object, skill.goal_object, carry, n);
}

}  // namespace cobt
