#include "cobt/runtime.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cobt {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("bt-runtime", msg); }

constexpr double kMinReverseSpan = 0.05;  // meters between live start and goal

void collect_effects(const BTNode& n, std::map<int, std::vector<Condition>>& out) {
  // Atomic tree: Fallback(Parallel(c^b), Sequence(..., Action b)).
  if (n.kind == NodeKind::kFallback && n.children.size() == 2 &&
      n.children[0].kind == NodeKind::kParallel && n.children[1].kind == NodeKind::kSequence &&
      !n.children[1].children.empty()) {
    const BTNode& last = n.children[1].children.back();
    if (last.kind == NodeKind::kAction && last.action) {
      auto& conds = out[*last.action];
      for (const auto& c : n.children[0].children) {
        if (c.kind == NodeKind::kCondition && c.condition) conds.push_back(*c.condition);
      }
    }
  }
  for (const auto& c : n.children) collect_effects(c, out);
}

class Fnv {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 1099511628211ull;
    }
  }
  void real(double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    bytes(&bits, sizeof bits);
  }
  void pose(const Pose7& p) {
    for (double v : p.to_array()) real(v);
  }
  void text(const std::string& s) {
    bytes(s.data(), s.size());
    bytes("", 1);
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(TickStatus s) {
  switch (s) {
    case TickStatus::kSuccess:
      return "Success";
    case TickStatus::kFailure:
      return "Failure";
    case TickStatus::kRunning:
      break;
  }
  return "Running";
}

TickStatus tick_status_from(const std::string& s) {
  if (s == "Success") return TickStatus::kSuccess;
  if (s == "Failure") return TickStatus::kFailure;
  if (s == "Running") return TickStatus::kRunning;
  fail("unknown tick status '" + s + "'");
}

nlohmann::json to_json(const Program& p) {
  return {{"tree", to_json(p.tree)}, {"actions", actions_to_json(p.actions)["actions"]}};
}

Program program_from_json(const nlohmann::json& j) {
  Program p;
  try {
    p.tree = tree_from_json(j.at("tree"));
    p.actions = actions_from_json(j.at("actions"));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed program: ") + e.what());
  }
  validate_tree(p.tree, p.actions.size());
  return p;
}

void validate(const PerturbationScript& s) {
  long last_tick = 0;
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const auto& t = s.entries[i].trigger;
    if (t.delay < 0) fail("negative perturbation delay in entry " + std::to_string(i));
    if (t.kind == PerturbationTrigger::Kind::kTick) {
      if (t.tick < last_tick) fail("perturbation ticks must be non-decreasing");
      last_tick = t.tick;
    } else if (t.action < 1) {
      fail("perturbation trigger references action < 1");
    }
    if (s.entries[i].object.empty()) fail("perturbation without object");
  }
}

nlohmann::json to_json(const PerturbationScript& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : s.entries) {
    nlohmann::json j;
    switch (e.trigger.kind) {
      case PerturbationTrigger::Kind::kTick:
        j["tick"] = e.trigger.tick;
        break;
      case PerturbationTrigger::Kind::kActionStart:
        j["action_start"] = e.trigger.action;
        j["delay"] = e.trigger.delay;
        break;
      case PerturbationTrigger::Kind::kActionStop:
        j["action_stop"] = e.trigger.action;
        j["delay"] = e.trigger.delay;
        break;
    }
    j["object"] = e.object;
    switch (e.op) {
      case PerturbationEntry::Op::kPose:
        j["pose"] = pose_to_json(e.pose);
        break;
      case PerturbationEntry::Op::kOffset:
        j["offset"] = {e.offset.x(), e.offset.y(), e.offset.z()};
        break;
      case PerturbationEntry::Op::kReset:
        j["reset"] = true;
        break;
    }
    arr.push_back(j);
  }
  return {{"perturbations", arr}};
}

PerturbationScript perturbation_script_from_json(const nlohmann::json& j) {
  PerturbationScript s;
  try {
    const auto& arr = j.is_array() ? j : j.at("perturbations");
    for (const auto& e : arr) {
      PerturbationEntry p;
      if (e.contains("tick")) {
        p.trigger.kind = PerturbationTrigger::Kind::kTick;
        p.trigger.tick = e["tick"].get<long>();
      } else if (e.contains("action_start")) {
        p.trigger.kind = PerturbationTrigger::Kind::kActionStart;
        p.trigger.action = e["action_start"].get<int>();
      } else if (e.contains("action_stop")) {
        p.trigger.kind = PerturbationTrigger::Kind::kActionStop;
        p.trigger.action = e["action_stop"].get<int>();
      } else {
        fail("perturbation entry without trigger");
      }
      p.trigger.delay = e.value("delay", 0L);
      p.object = e.at("object").get<std::string>();
      if (e.contains("pose")) {
        p.op = PerturbationEntry::Op::kPose;
        p.pose = pose_from_json(e["pose"]);
      } else if (e.contains("offset")) {
        p.op = PerturbationEntry::Op::kOffset;
        const auto& o = e["offset"];
        if (!o.is_array() || o.size() != 3) fail("offset must have 3 elements");
        p.offset = {o[0].get<double>(), o[1].get<double>(), o[2].get<double>()};
      } else if (e.value("reset", false)) {
        p.op = PerturbationEntry::Op::kReset;
      } else {
        fail("perturbation entry needs pose, offset or reset");
      }
      s.entries.push_back(p);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("malformed perturbation script: ") + e.what());
  }
  validate(s);
  return s;
}

PerturbationScript load_perturbation_script(const std::string& path) {
  return perturbation_script_from_json(read_json_file(path, "bt-runtime"));
}

int ExecutionTrace::retries() const {
  int r = 0;
  for (const auto& [a, n] : executions) r += std::max(0, n - 1);
  return r;
}

nlohmann::json to_json(const TickRecord& r) {
  nlohmann::json nodes = nlohmann::json::object();
  for (const auto& [id, s] : r.nodes) nodes[std::to_string(id)] = to_string(s);
  return {{"tick", r.tick},
          {"root", to_string(r.root)},
          {"nodes", nodes},
          {"action", r.active_action ? nlohmann::json(*r.active_action) : nlohmann::json()},
          {"digest", hex(r.digest)}};
}

nlohmann::json summary_json(const ExecutionTrace& t) {
  nlohmann::json exec = nlohmann::json::object();
  for (const auto& [a, n] : t.executions) exec[std::to_string(a)] = n;
  nlohmann::json perturbations = nlohmann::json::array();
  for (const auto& [tick, obj] : t.perturbations) perturbations.push_back({tick, obj});
  return {{"success", t.success},
          {"ticks", t.ticks()},
          {"executions", exec},
          {"retries", t.retries()},
          {"perturbations", perturbations}};
}

void write_trace(std::ostream& out, const ExecutionTrace& t) {
  for (const auto& r : t.records) out << to_json(r).dump() << '\n';
  out << nlohmann::json{{"summary", summary_json(t)}}.dump() << '\n';
}

void write_trace_file(const std::string& path, const ExecutionTrace& t) {
  std::ofstream out(path);
  if (!out) throw ValidationError("bt-runtime", "cannot write '" + path + "'");
  write_trace(out, t);
}

std::uint64_t world_digest(const WorldState& w) {
  Fnv f;
  for (const auto& [id, pose] : w.objects) {
    f.text(id);
    f.pose(pose);
  }
  f.pose(w.ee);
  f.real(w.gripper);
  f.text(w.attachment ? w.attachment->object : std::string());
  return f.value();
}

TickStatus eval_condition(const Condition& c, const WorldState& world) {
  auto verdict = [](bool b) { return b ? TickStatus::kSuccess : TickStatus::kFailure; };
  switch (c.variable) {
    case StateVariable::kGripper: {
      const bool closed = world.gripper > kGripperClosedThreshold;
      return verdict(closed == (gripper_state_from(c.expected) == GripperState::kClosed));
    }
    case StateVariable::kEndEffector: {
      if (!world.has_object(c.subject)) fail("unknown condition subject '" + c.subject + "'");
      const bool near = pose_distance(world.ee, world.object(c.subject)) < c.threshold;
      return verdict(near == (end_effector_state_from(c.expected) == EndEffectorState::kNear));
    }
    case StateVariable::kObject:
      break;
  }
  if (!world.has_object(c.subject)) fail("unknown condition subject '" + c.subject + "'");
  const Pose7& target = world.object(c.subject);
  const ObjectState want = object_state_from(c.expected);
  auto on_goal = [&] {
    if (!c.goal) fail("OnGoal condition without goal");
    if (!world.has_object(c.goal->anchor)) {
      fail("unknown goal anchor '" + c.goal->anchor + "'");
    }
    return pose_distance(target, world.object(c.goal->anchor).compose(c.goal->pose)) <
           c.threshold;
  };
  switch (want) {
    case ObjectState::kOnGoal:
      return verdict(on_goal());
    case ObjectState::kNear:
      return verdict(nearest_other_distance(world.objects, c.subject) < c.threshold);
    case ObjectState::kNone:
      break;
  }
  const bool goal = c.goal ? on_goal() : false;
  return verdict(!goal && !(nearest_other_distance(world.objects, c.subject) < c.threshold));
}

ExecutionSession::ExecutionSession(Program program, WorldState world, SessionConfig config,
                                   PerturbationScript script)
    : program_(std::move(program)),
      world_(std::move(world)),
      initial_(world_),
      config_(config),
      script_(std::move(script)) {
  if (!(config_.tick_rate_hz > 0.0)) fail("tick rate must be > 0");
  if (!(config_.time_scale > 0.0)) fail("time scale must be > 0");
  if (config_.max_ticks < 1) fail("max_ticks must be >= 1");
  validate_tree(program_.tree, program_.actions.size());
  validate(script_);
  for (const auto& e : script_.entries) {
    if (!world_.has_object(e.object)) fail("perturbation of unknown object '" + e.object + "'");
  }
  fired_.assign(script_.entries.size(), false);
  collect_effects(program_.tree, effects_);
  for (std::size_t i = 0; i < program_.actions.size(); ++i) {
    trace_.executions[static_cast<int>(i) + 1] = 0;
  }
}

const std::vector<Condition>& ExecutionSession::effects(int action) const {
  static const std::vector<Condition> kNone;
  auto it = effects_.find(action);
  return it == effects_.end() ? kNone : it->second;
}

std::optional<int> ExecutionSession::active_action() const {
  if (active_) return active_->action;
  return std::nullopt;
}

bool ExecutionSession::active_reversed() const { return active_ && active_->reverse; }

bool ExecutionSession::effects_hold(int action) const {
  for (const auto& c : effects(action)) {
    if (eval_condition(c, world_) != TickStatus::kSuccess) return false;
  }
  return true;
}

void ExecutionSession::perturb(const ObjectId& obj, const Pose7& pose) {
  world_ = cobt::perturb(world_, obj, pose);
  trace_.perturbations.emplace_back(tick_, obj);
}

void ExecutionSession::apply(const PerturbationEntry& e) {
  const Pose7& now = world_.object(e.object);
  switch (e.op) {
    case PerturbationEntry::Op::kPose:
      perturb(e.object, e.pose);
      break;
    case PerturbationEntry::Op::kOffset:
      perturb(e.object, Pose7(now.position + e.offset, now.orientation));
      break;
    case PerturbationEntry::Op::kReset:
      perturb(e.object, initial_.object(e.object));
      break;
  }
}

void ExecutionSession::apply_due_perturbations() {
  for (std::size_t i = 0; i < script_.entries.size(); ++i) {
    if (fired_[i]) continue;
    const auto& t = script_.entries[i].trigger;
    std::optional<long> due;
    if (t.kind == PerturbationTrigger::Kind::kTick) {
      due = t.tick;
    } else {
      const auto& events =
          t.kind == PerturbationTrigger::Kind::kActionStart ? first_start_ : first_stop_;
      auto it = events.find(t.action);
      if (it != events.end()) due = it->second + t.delay;
    }
    if (due && tick_ >= *due) {
      fired_[i] = true;
      apply(script_.entries[i]);
    }
  }
}

void ExecutionSession::start_action(int action) {
  if (action < 1 || static_cast<std::size_t>(action) > program_.actions.size()) {
    fail("action " + std::to_string(action) + " out of range");
  }
  const PrimitiveAction& a = program_.actions[static_cast<std::size_t>(action) - 1];
  if (!world_.has_object(a.relative_object)) {
    throw ExecutionError("bt-runtime",
                         "relative object '" + a.relative_object + "' absent from world");
  }
  const Pose7& anchor = world_.object(a.relative_object);
  const Pose7 live_goal = anchor.compose(a.end_transform);
  const Pose7 live_start = anchor.compose(a.start_transform);
  const double to_goal = (world_.ee.position - live_goal.position).norm();
  const double to_start = (world_.ee.position - live_start.position).norm();
  Rollout r;
  r.action = action;
  // A (near-)stationary primitive has no meaningful direction: run forward.
  const double span = (a.end_transform.position - a.start_transform.position).norm();
  r.reverse = span >= kMinReverseSpan && to_goal < to_start;
  Pose7 goal = live_goal;
  if (r.reverse && config_.fix_reverse_transform) {
    // Mirror the approach side within the relative object's table plane.
    Pose7 t = a.end_transform;
    t.position.x() = -t.position.x();
    t.position.y() = -t.position.y();
    goal = anchor.compose(t);
  }
  RolloutOptions opts;
  opts.time_scale = config_.time_scale;
  opts.dt = 1.0 / config_.tick_rate_hz;
  opts.gripper_start = world_.gripper;
  r.trajectory = rollout(r.reverse ? a.dmps.reverse : a.dmps.forward, world_.ee, goal, opts);
  active_ = std::move(r);
  ++trace_.executions[action];
  first_start_.emplace(action, tick_);
}

TickStatus ExecutionSession::tick_action(int action) {
  action_ticked_ = true;
  if (active_ && active_->action != action) {
    first_stop_.emplace(active_->action, tick_);
    active_.reset();
  }
  if (!active_) start_action(action);
  Rollout& r = *active_;
  if (!r.finished) {
    if (!world_stepped_ && r.cursor + 1 < r.trajectory.size()) {
      ++r.cursor;
      const auto& p = r.trajectory[r.cursor];
      world_ = step(world_, p.pose, p.gripper, 1.0 / config_.tick_rate_hz);
      world_stepped_ = true;
    }
    if (r.cursor + 1 < r.trajectory.size()) return TickStatus::kRunning;
    r.finished = true;
  }
  const bool ok = effects_hold(action);
  if (ok || config_.leaf_policy == LeafPolicy::kFailThenRetry) {
    first_stop_.emplace(action, tick_);
    active_.reset();
    return ok ? TickStatus::kSuccess : TickStatus::kFailure;
  }
  return TickStatus::kRunning;
}

TickStatus ExecutionSession::tick_node(const BTNode& n) {
  TickStatus s = TickStatus::kFailure;
  switch (n.kind) {
    case NodeKind::kFallback:
      s = TickStatus::kFailure;
      for (const auto& c : n.children) {
        s = tick_node(c);
        if (s != TickStatus::kFailure) break;
      }
      break;
    case NodeKind::kSequence: {
      s = TickStatus::kSuccess;
      std::size_t i = n.memory ? resume_[n.id] : 0;
      for (; i < n.children.size(); ++i) {
        s = tick_node(n.children[i]);
        if (s != TickStatus::kSuccess) break;
      }
      if (n.memory) resume_[n.id] = s == TickStatus::kRunning ? i : 0;
      break;
    }
    case NodeKind::kParallel: {
      // Conditions are instantaneous: evaluate all, succeed only if all do.
      bool all = true;
      for (const auto& c : n.children) all = (tick_node(c) == TickStatus::kSuccess) && all;
      s = all ? TickStatus::kSuccess : TickStatus::kFailure;
      break;
    }
    case NodeKind::kCondition:
      s = eval_condition(*n.condition, world_);
      break;
    case NodeKind::kAction:
      s = tick_action(*n.action);
      break;
  }
  if (current_) current_->nodes[n.id] = s;
  return s;
}

TickStatus ExecutionSession::tick() {
  if (tick_ >= config_.max_ticks) throw BudgetExhausted("bt-runtime", "tick budget exhausted");
  apply_due_perturbations();
  TickRecord rec;
  rec.tick = tick_;
  current_ = config_.record_nodes ? &rec : nullptr;
  action_ticked_ = false;
  world_stepped_ = false;
  const TickStatus status = tick_node(program_.tree);
  current_ = nullptr;
  if (active_ && !action_ticked_) {
    // Halt: the active action lost the tick.
    first_stop_.emplace(active_->action, tick_);
    active_.reset();
  }
  if (!world_stepped_) {
    world_ = step(world_, world_.ee, world_.gripper, 1.0 / config_.tick_rate_hz);
  }
  rec.root = status;
  rec.active_action = active_action();
  rec.digest = world_digest(world_);
  trace_.records.push_back(std::move(rec));
  if (status == TickStatus::kSuccess) trace_.success = true;
  ++tick_;
  return status;
}

const ExecutionTrace& ExecutionSession::run_to_completion() {
  while (tick() != TickStatus::kSuccess) {
  }
  return trace_;
}

}  // namespace cobt
