#pragma once

#include "cobt/bt.hpp"
#include "cobt/dmp.hpp"
#include "cobt/primitives.hpp"
#include "cobt/world.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cobt {

enum class TickStatus { kSuccess, kFailure, kRunning };

std::string to_string(TickStatus s);
TickStatus tick_status_from(const std::string& s);

/// What a finished rollout returns when its effects do not hold.
enum class LeafPolicy {
  /// Failure now, fresh rollout on re-entry.
  kFailThenRetry,
  /// Running (holding position) until the effects hold.
  kRunningUntilMet,
};

/// Executable unit: a tree plus the actions its leaves index (1-based).
struct Program {
  BTNode tree;
  std::vector<PrimitiveAction> actions;
};

nlohmann::json to_json(const Program& p);
Program program_from_json(const nlohmann::json& j);

struct SessionConfig {
  double tick_rate_hz = 100.0;
  double time_scale = 2.0;
  long max_ticks = 60000;
  bool fix_reverse_transform = false;
  LeafPolicy leaf_policy = LeafPolicy::kFailThenRetry;
  /// Record per-node statuses in the trace (disable for long trial batches).
  bool record_nodes = true;
};

/// When a scripted perturbation fires. Each entry fires at most once.
struct PerturbationTrigger {
  enum class Kind { kTick, kActionStart, kActionStop };
  Kind kind = Kind::kTick;
  long tick = 0;     // kTick: fires before this tick
  int action = 1;    // kActionStart / kActionStop: first start / stop of this action
  long delay = 0;    // ticks after the start / stop event
};

struct PerturbationEntry {
  enum class Op { kPose, kOffset, kReset };
  PerturbationTrigger trigger;
  ObjectId object;
  Op op = Op::kPose;
  Pose7 pose;                                    // kPose
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // kOffset, world frame
};

struct PerturbationScript {
  std::vector<PerturbationEntry> entries;
};

/// Checks that tick triggers are non-decreasing and delays non-negative.
void validate(const PerturbationScript& s);
nlohmann::json to_json(const PerturbationScript& s);
PerturbationScript perturbation_script_from_json(const nlohmann::json& j);
PerturbationScript load_perturbation_script(const std::string& path);

struct TickRecord {
  long tick = 0;
  TickStatus root = TickStatus::kFailure;
  /// Status of every node ticked this tick, by node id.
  std::map<int, TickStatus> nodes;
  std::optional<int> active_action;  // action running after the tick
  std::uint64_t digest = 0;          // world snapshot after the tick
};

struct ExecutionTrace {
  std::vector<TickRecord> records;
  bool success = false;
  /// Rollouts started per action index.
  std::map<int, int> executions;
  /// Perturbations applied, as (tick, object).
  std::vector<std::pair<long, ObjectId>> perturbations;

  long ticks() const { return static_cast<long>(records.size()); }
  int retries() const;
};

nlohmann::json to_json(const TickRecord& r);
/// {"success", "ticks", "executions", "retries", "perturbations"}.
nlohmann::json summary_json(const ExecutionTrace& t);
/// JSON lines: one record per tick, then {"summary": {...}}.
void write_trace(std::ostream& out, const ExecutionTrace& t);
void write_trace_file(const std::string& path, const ExecutionTrace& t);

/// FNV-1a over the snapshot's bit patterns.
std::uint64_t world_digest(const WorldState& w);

/// Same predicates as grounding. Object Near has no history available at
/// runtime and is evaluated as nearest-other distance < threshold.
TickStatus eval_condition(const Condition& c, const WorldState& world);

class ExecutionSession {
 public:
  ExecutionSession(Program program, WorldState world, SessionConfig config = {},
                   PerturbationScript script = {});

  /// One tick of the root. Throws BudgetExhausted once max_ticks ticks ran.
  TickStatus tick();
  /// Ticks until the root succeeds. On budget exhaustion the trace stays
  /// available through trace().
  const ExecutionTrace& run_to_completion();

  /// External perturbation applied between ticks.
  void perturb(const ObjectId& obj, const Pose7& pose);

  const WorldState& world() const { return world_; }
  const ExecutionTrace& trace() const { return trace_; }
  const Program& program() const { return program_; }
  const SessionConfig& config() const { return config_; }
  std::optional<int> active_action() const;
  /// True while the active rollout uses the reverse model.
  bool active_reversed() const;
  bool done() const { return trace_.success; }
  /// Effect conditions guarding each action (its owning Parallel).
  const std::vector<Condition>& effects(int action) const;

 private:
  struct Rollout {
    int action = 0;
    Trajectory trajectory;
    std::size_t cursor = 0;
    bool reverse = false;
    bool finished = false;  // RunningUntilMet: trajectory consumed
  };

  TickStatus tick_node(const BTNode& n);
  TickStatus tick_action(int action);
  void start_action(int action);
  void apply_due_perturbations();
  void apply(const PerturbationEntry& e);
  bool effects_hold(int action) const;

  Program program_;
  WorldState world_;
  WorldState initial_;
  SessionConfig config_;
  PerturbationScript script_;
  std::vector<bool> fired_;
  std::map<int, long> first_start_;
  std::map<int, long> first_stop_;
  std::map<int, std::vector<Condition>> effects_;
  std::optional<Rollout> active_;
  std::map<int, std::size_t> resume_;  // memory sequences: child to resume at
  bool action_ticked_ = false;
  bool world_stepped_ = false;
  long tick_ = 0;
  TickRecord* current_ = nullptr;
  ExecutionTrace trace_;
};

}  // namespace cobt
