#include "cobt/error.hpp"
#include "cobt/json_io.hpp"
#include "cobt/memory.hpp"
#include "cobt/pipeline.hpp"
#include "cobt/service.hpp"
#include "cobt/tasks.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace {

using namespace cobt;
using nlohmann::json;

std::atomic<bool> g_stop{false};

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("gateway", msg); }

/// Execution flags shared by exec, trials and serve.
struct ExecFlags {
  double time_scale = 2.0;
  double tick_rate = 100.0;
  long max_ticks = 60000;
  bool fix_reverse = false;
  std::string leaf_policy = "fail_then_retry";

  void add(CLI::App& app) {
    app.add_option("--time-scale", time_scale, "Rollout duration factor")->capture_default_str();
    app.add_option("--tick-rate", tick_rate, "Ticks per simulated second")->capture_default_str();
    app.add_option("--max-ticks", max_ticks, "Tick budget")->capture_default_str();
    app.add_flag("--fix-reverse-transform", fix_reverse,
                 "Mirror the goal transform when running a primitive in reverse");
    app.add_option("--leaf-policy", leaf_policy, "fail_then_retry | running_until_met")
        ->check(CLI::IsMember({"fail_then_retry", "running_until_met"}))
        ->capture_default_str();
  }

  SessionConfig config() const {
    SessionConfig c;
    c.time_scale = time_scale;
    c.tick_rate_hz = tick_rate;
    c.max_ticks = max_ticks;
    c.fix_reverse_transform = fix_reverse;
    c.leaf_policy =
        leaf_policy == "running_until_met" ? LeafPolicy::kRunningUntilMet : LeafPolicy::kFailThenRetry;
    if (!(c.time_scale > 0.0) || !(c.tick_rate_hz > 0.0) || c.max_ticks < 1) {
      fail("invalid execution settings");
    }
    return c;
  }
};

struct LearnFlags {
  double threshold = kDefaultThreshold;
  std::optional<double> penalty;
  std::string layout = "parallel";

  void add(CLI::App& app) {
    app.add_option("--threshold", threshold, "Near threshold (m)")->capture_default_str();
    app.add_option("--penalty", penalty, "PELT penalty (default 3 ln(N) var)");
    app.add_option("--layout", layout,
                   "parallel: all constraints guard the action; sequence: pre-conditions run "
                   "ahead of the action")
        ->check(CLI::IsMember({"parallel", "sequence"}))
        ->capture_default_str();
  }

  LearnOptions options() const {
    LearnOptions o;
    o.segmenter.threshold = threshold;
    o.segmenter.penalty = penalty;
    o.layout = layout == "sequence" ? TreeLayout::kPreconditionsInSequence
                                    : TreeLayout::kConstraintsInParallel;
    return o;
  }
};

/// A scene argument is a scene file path or a fixture name.
Scene resolve_scene(const std::string& arg) {
  if (std::filesystem::exists(arg)) return load_scene_file(arg);
  for (const auto& n : fixture_names()) {
    if (n == arg) return fixture_by_name(n).scene;
  }
  fail("scene '" + arg + "' is neither a file nor a fixture name");
}

SkillRecord require_skill(const SkillMemory& memory, const std::string& name) {
  auto r = memory.by_name(name);
  if (!r) fail("unknown skill '" + name + "'");
  return *r;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_synth(const std::string& task, const std::string& out, const std::string& scene_out,
              const std::string& composite, const std::string& goal_out, std::uint64_t seed) {
  if (!composite.empty()) {
    CompositeFixture c;
    if (composite == "kitting") {
      c = kitting_composite();
    } else if (composite == "drawer_pnp") {
      c = drawer_pnp_composite();
    } else {
      fail("unknown composite '" + composite + "' (kitting, drawer_pnp)");
    }
    Scene scene = c.scene;
    scene.world = randomize_scene(c.scene, c.scene.area, seed);
    if (!scene_out.empty()) save_scene_file(scene_out, scene);
    const GoalScene goal{composite_goal_scene(composite, scene.world)};
    if (!goal_out.empty()) write_json_file_atomic(goal_out, to_json(goal));
    print({{"composite", composite}, {"skills", c.skills}, {"goal", to_json(goal)}});
    return 0;
  }
  const TaskFixture fx = fixture_by_name(task);
  const Demonstration demo = fx.demo();
  if (!out.empty()) write_demonstration_file(out, demo);
  if (!scene_out.empty()) save_scene_file(scene_out, fx.scene);
  print({{"task", fx.name},
         {"target", fx.target},
         {"goal", fx.goal},
         {"samples", demo.size()},
         {"duration", demo.samples.back().t - demo.samples.front().t}});
  return 0;
}

int cmd_segment(const std::string& demo_path, const std::string& target, const std::string& goal,
                const LearnFlags& lf, const std::string& out_dir) {
  const Demonstration demo = load_demonstration_file(demo_path);
  const SegmentedDataset seg = segment(demo, target, goal, lf.options().segmenter);
  const json j = to_json(seg);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_json_file_atomic((std::filesystem::path(out_dir) / "segments.json").string(), j);
  }
  print(j);
  return 0;
}

int cmd_learn(const std::string& demo_path, const std::string& target, const std::string& goal,
              const std::string& name, const std::string& memory_path, const LearnFlags& lf,
              const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const Demonstration demo = load_demonstration_file(demo_path);
  // Memory is checked first so a rejected name leaves no artifacts behind.
  SkillMemory memory = memory_path.empty() ? SkillMemory{} : SkillMemory::load(memory_path);
  const LearnResult r = learn_skill(demo, target, goal, name, lf.options());
  memory.save_skill(r.record);
  write_learn_artifacts(r, out_dir);
  if (!memory_path.empty()) memory.save(memory_path);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print({{"skill", name},
         {"actions", r.actions.size()},
         {"nodes", count_nodes(r.record.tree)},
         {"tuple", to_json(r.tuple)},
         {"learn_seconds", r.seconds},
         {"wall_seconds", wall},
         {"out_dir", out_dir}});
  return 0;
}

int cmd_exec(const std::string& memory_path, const std::string& skill, const std::string& goal_path,
             const std::string& scene_arg, std::optional<std::uint64_t> seed,
             const std::string& perturb_path, const std::string& trace_path, const ExecFlags& ef) {
  const SkillMemory memory = SkillMemory::load(memory_path);
  Program program;
  if (!goal_path.empty()) {
    const GoalScene goal = goal_scene_from_json(read_json_file(goal_path, "gateway"));
    program = composite_bt(adapt_goal(goal, memory), memory);
  } else if (!skill.empty()) {
    program = program_of(require_skill(memory, skill));
  } else {
    fail("exec needs --skill or --goal-scene");
  }
  const std::string scene_name = scene_arg.empty() ? skill : scene_arg;
  if (scene_name.empty()) fail("exec needs --scene");
  const Scene scene = resolve_scene(scene_name);
  const WorldState world = seed ? randomize_scene(scene, scene.area, *seed) : scene.world;
  PerturbationScript script;
  if (!perturb_path.empty()) script = load_perturbation_script(perturb_path);
  ExecutionSession session(program, world, ef.config(), std::move(script));
  int code = 0;
  std::string error;
  try {
    session.run_to_completion();
  } catch (const Error& e) {
    code = static_cast<int>(e.exit_code());
    error = e.what();
  }
  if (!trace_path.empty()) write_trace_file(trace_path, session.trace());
  json summary = summary_json(session.trace());
  if (!error.empty()) summary["error"] = error;
  print(summary);
  return code;
}

int cmd_trials(const std::string& memory_path, const std::string& skill, const std::string& scene_arg,
               int n, std::uint64_t seed, const std::string& perturb_path, const std::string& scenario,
               const std::string& out, const ExecFlags& ef) {
  const SkillMemory memory = SkillMemory::load(memory_path);
  const SkillRecord rec = require_skill(memory, skill);
  const Scene scene = resolve_scene(scene_arg.empty() ? skill : scene_arg);
  TrialOptions opts;
  opts.n = n;
  opts.seed = seed;
  opts.session = ef.config();
  opts.session.record_nodes = false;
  if (!perturb_path.empty() && !scenario.empty()) fail("--perturb and --scenario are exclusive");
  if (!perturb_path.empty()) {
    const PerturbationScript s = load_perturbation_script(perturb_path);
    opts.script = [s](const WorldState&) { return s; };
  } else if (!scenario.empty()) {
    const Scenario sc = scenario_from(scenario);
    opts.script = [sc, rec](const WorldState& w) { return scenario_script(sc, w, rec); };
  }
  const TrialReport report = run_trials(skill, program_of(rec), scene, opts);
  const json j = to_json(report);
  if (!out.empty()) write_json_file_atomic(out, j);
  print(j);
  return 0;
}

int cmd_compose(const std::string& memory_path, const std::string& goal_path,
                const std::string& out_dir) {
  const SkillMemory memory = SkillMemory::load(memory_path);
  const GoalScene goal = goal_scene_from_json(read_json_file(goal_path, "gateway"));
  const AdaptedGoal adapted = adapt_goal(goal, memory);
  const Program program = composite_bt(adapted, memory);
  json matches = json::array();
  for (const auto& m : adapted.matches) {
    matches.push_back({{"skill", m.skill},
                       {"target", m.target},
                       {"anchor", m.anchor},
                       {"goal_object_found", m.goal_object_found}});
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path d(out_dir);
    write_json_file_atomic((d / "composite.json").string(), to_json(program));
    std::ofstream((d / "composite.dot").string()) << export_dot(program.tree);
  }
  print({{"matches", matches},
         {"actions", program.actions.size()},
         {"nodes", count_nodes(program.tree)}});
  return 0;
}

int cmd_serve(int port, const std::string& memory_path, const ExecFlags& ef, const LearnFlags& lf) {
  ServerOptions opts;
  opts.port = port;
  opts.memory_path = memory_path;
  opts.session = ef.config();
  opts.learn = lf.options();
  Server server(opts);
  server.start();
  std::cout << "listening on 127.0.0.1:" << server.port() << std::endl;
  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cobt: behavior trees from a single demonstration"};
  app.require_subcommand(1);

  std::string task = "pnp", out, scene_out, composite, goal_out;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a fixture demonstration and its scene");
  synth->add_option("--task", task, "Fixture name")->capture_default_str();
  synth->add_option("--out", out, "Demonstration file (JSON lines)");
  synth->add_option("--scene-out", scene_out, "Scene file");
  synth->add_option("--composite", composite, "kitting | drawer_pnp: randomized scene + goal");
  synth->add_option("--goal-out", goal_out, "Goal scene file (with --composite)");
  synth->add_option("--seed", synth_seed, "Randomization seed (with --composite)");

  std::string demo_path, target, goal, out_dir;
  LearnFlags seg_flags;
  auto* seg = app.add_subcommand("segment", "Segment a demonstration");
  seg->add_option("demo", demo_path, "Demonstration file")->required();
  seg->add_option("--target", target, "Target object")->required();
  seg->add_option("--goal", goal, "Goal object")->required();
  seg->add_option("--out-dir", out_dir, "Write segments.json here");
  seg_flags.add(*seg);

  std::string name, memory_path, learn_out = ".";
  LearnFlags learn_flags;
  auto* learn = app.add_subcommand("learn", "Learn a skill and save it to memory");
  learn->add_option("demo", demo_path, "Demonstration file")->required();
  learn->add_option("--target", target, "Target object")->required();
  learn->add_option("--goal", goal, "Goal object")->required();
  learn->add_option("--name", name, "Skill name")->required();
  learn->add_option("--memory", memory_path, "Skill memory file");
  learn->add_option("--out-dir", learn_out, "Artifact directory")->capture_default_str();
  learn_flags.add(*learn);

  std::string skill, goal_scene, scene, perturb, trace;
  std::optional<std::uint64_t> exec_seed;
  ExecFlags exec_flags;
  auto* exec = app.add_subcommand("exec", "Execute a skill or a composite goal scene");
  exec->add_option("--memory", memory_path, "Skill memory file")->required();
  exec->add_option("--skill", skill, "Skill name");
  exec->add_option("--goal-scene", goal_scene, "Goal scene file (composite execution)");
  exec->add_option("--scene", scene, "Scene file or fixture name (default: the skill name)");
  exec->add_option("--seed", exec_seed, "Randomize the scene with this seed");
  exec->add_option("--perturb", perturb, "Perturbation script");
  exec->add_option("--trace", trace, "Trace output (JSON lines)");
  exec_flags.add(*exec);

  int n = 20;
  std::uint64_t trials_seed = 0;
  std::string scenario, report_out;
  ExecFlags trials_flags;
  auto* trials = app.add_subcommand("trials", "Run randomized trials of a skill");
  trials->add_option("--memory", memory_path, "Skill memory file")->required();
  trials->add_option("--skill", skill, "Skill name")->required();
  trials->add_option("--scene", scene, "Scene file or fixture name (default: the skill name)");
  trials->add_option("-n,--trials", n, "Trial count")->capture_default_str();
  trials->add_option("--seed", trials_seed, "Seed of trial 0")->capture_default_str();
  trials->add_option("--perturb", perturb, "Perturbation script applied to every trial");
  trials->add_option("--scenario", scenario,
                     "target-moved-during-reach | goal-moved-before-place | reset-after-completion");
  trials->add_option("--out", report_out, "Report file");
  trials_flags.add(*trials);

  auto* compose = app.add_subcommand("compose", "Compose memorized skills for a goal scene");
  compose->add_option("--memory", memory_path, "Skill memory file")->required();
  compose->add_option("--goal-scene", goal_scene, "Goal scene file")->required();
  compose->add_option("--out-dir", out_dir, "Write composite.json and composite.dot here");

  int port = 7878;
  ExecFlags serve_flags;
  LearnFlags serve_learn;
  auto* serve = app.add_subcommand("serve", "Run the session service on 127.0.0.1");
  serve->add_option("--port", port, "TCP port (0 picks one)")->capture_default_str();
  serve->add_option("--memory", memory_path, "Skill memory file");
  serve_flags.add(*serve);
  serve_learn.add(*serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kValidation);
  }

  try {
    if (*synth) return cmd_synth(task, out, scene_out, composite, goal_out, synth_seed);
    if (*seg) return cmd_segment(demo_path, target, goal, seg_flags, out_dir);
    if (*learn) return cmd_learn(demo_path, target, goal, name, memory_path, learn_flags, learn_out);
    if (*exec) {
      return cmd_exec(memory_path, skill, goal_scene, scene, exec_seed, perturb, trace, exec_flags);
    }
    if (*trials) {
      return cmd_trials(memory_path, skill, scene, n, trials_seed, perturb, scenario, report_out,
                        trials_flags);
    }
    if (*compose) return cmd_compose(memory_path, goal_scene, out_dir);
    if (*serve) return cmd_serve(port, memory_path, serve_flags, serve_learn);
  } catch (const Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kValidation);
  }
  return 0;
}
