#include "cobt/service.hpp"

#include "cobt/error.hpp"
#include "cobt/json_io.hpp"
#include "cobt/tasks.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>

namespace cobt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("gateway", msg); }

SessionConfig session_config(SessionConfig cfg, const json& p) {
  cfg.time_scale = p.value("time_scale", cfg.time_scale);
  cfg.tick_rate_hz = p.value("tick_rate", cfg.tick_rate_hz);
  cfg.max_ticks = p.value("max_ticks", cfg.max_ticks);
  cfg.fix_reverse_transform = p.value("fix_reverse_transform", cfg.fix_reverse_transform);
  cfg.record_nodes = p.value("record_nodes", cfg.record_nodes);
  if (p.contains("leaf_policy")) {
    const std::string lp = p["leaf_policy"].get<std::string>();
    if (lp == "fail_then_retry") {
      cfg.leaf_policy = LeafPolicy::kFailThenRetry;
    } else if (lp == "running_until_met") {
      cfg.leaf_policy = LeafPolicy::kRunningUntilMet;
    } else {
      fail("unknown leaf_policy '" + lp + "'");
    }
  }
  if (!(cfg.time_scale > 0.0) || !(cfg.tick_rate_hz > 0.0) || cfg.max_ticks < 1) {
    fail("invalid execution settings");
  }
  return cfg;
}

}  // namespace

class Server::Connection {
 public:
  Connection(Server& server, int fd, std::string id)
      : server_(server), fd_(fd), id_(std::move(id)) {
    world_.ee = home_pose();
    scene_.world = world_;
    reader_ = std::thread([this] { read_loop(); });
    worker_ = std::thread([this] { work_loop(); });
  }

  ~Connection() {
    shutdown();
    if (reader_.joinable()) reader_.join();
    if (worker_.joinable()) worker_.join();
    ::close(fd_);
  }

  void shutdown() {
    closing_ = true;
    ::shutdown(fd_, SHUT_RDWR);
    cv_.notify_all();
  }

  bool finished() const { return finished_; }

 private:
  struct Item {
    std::optional<Message> msg;
    std::string error;  // undecodable frame
    bool closed = false;
    std::int64_t seq = 0;  // of an undecodable frame, when readable
  };

  void push(Item it) {
    {
      std::lock_guard lock(mu_);
      inbox_.push_back(std::move(it));
    }
    cv_.notify_one();
  }

  Item pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return !inbox_.empty() || closing_; });
    if (inbox_.empty()) return Item{std::nullopt, {}, true};
    Item it = std::move(inbox_.front());
    inbox_.pop_front();
    return it;
  }

  std::optional<Item> try_pop() {
    std::lock_guard lock(mu_);
    if (inbox_.empty()) return std::nullopt;
    Item it = std::move(inbox_.front());
    inbox_.pop_front();
    return it;
  }

  void read_loop() {
    for (;;) {
      std::optional<std::string> body;
      try {
        body = read_frame(fd_);
      } catch (const Error& e) {
        // Oversized or truncated frame: the stream cannot be resynchronized.
        push(Item{std::nullopt, e.what(), false});
        break;
      }
      if (!body) break;
      json j;
      try {
        j = json::parse(*body);
      } catch (const json::exception& e) {
        push(Item{std::nullopt, std::string("malformed JSON: ") + e.what(), false});
        continue;
      }
      try {
        push(Item{message_from_json(j), {}, false});
      } catch (const Error& e) {
        std::int64_t seq = 0;
        if (j.is_object() && j.contains("seq") && j["seq"].is_number_integer()) {
          seq = j["seq"].get<std::int64_t>();
        }
        push(Item{std::nullopt, e.what(), false, seq});
      }
    }
    push(Item{std::nullopt, {}, true});
  }

  void work_loop() {
    while (!closing_) {
      Item it = pop();
      if (it.closed) break;
      process(it);
    }
    closing_ = true;
    ::shutdown(fd_, SHUT_RDWR);
    finished_ = true;
  }

  /// False when the connection went away.
  bool process(const Item& it) {
    if (it.closed) {
      closing_ = true;
      return false;
    }
    if (!it.msg) {
      send_error("gateway", it.error, it.seq);
      return true;
    }
    const Message& m = *it.msg;
    if (!accept(m)) return true;
    try {
      handle(m);
    } catch (const Error& e) {
      send_error(e.module(), e.what(), m.seq, static_cast<int>(e.exit_code()));
    } catch (const json::exception& e) {
      send_error("gateway", std::string("malformed payload: ") + e.what(), m.seq);
    } catch (const std::exception& e) {
      send_error("gateway", e.what(), m.seq);
    }
    return true;
  }

  /// Session and ordering checks; violations are answered, the session stays.
  bool accept(const Message& m) {
    if (!m.session.empty() && m.session != id_) {
      send_error("gateway", "unknown session '" + m.session + "'", m.seq);
      return false;
    }
    if (m.seq <= last_seq_) {
      send_error("gateway",
                 "non-increasing seq " + std::to_string(m.seq) + " (last " +
                     std::to_string(last_seq_) + ")",
                 m.seq);
      return false;
    }
    last_seq_ = m.seq;
    if (m.kind == MessageKind::kTickUpdate || m.kind == MessageKind::kError) {
      send_error("gateway", to_string(m.kind) + " is server-only", m.seq);
      return false;
    }
    return true;
  }

  void send(MessageKind kind, json payload, std::int64_t reply_to) {
    Message m;
    m.kind = kind;
    m.session = id_;
    m.seq = ++out_seq_;
    m.reply_to = reply_to;
    m.payload = std::move(payload);
    try {
      write_frame(fd_, encode_frame(m));
    } catch (const Error&) {
      closing_ = true;
    }
  }

  void send_error(const std::string& module, const std::string& what, std::int64_t reply_to,
                  int code = static_cast<int>(ExitCode::kValidation)) {
    send(MessageKind::kError, {{"module", module}, {"message", what}, {"code", code}}, reply_to);
  }

  void handle(const Message& m) {
    const json& p = m.payload;
    switch (m.kind) {
      case MessageKind::kStartDemo:
        return start_demo(m, p);
      case MessageKind::kDemoSample:
        return demo_sample(p);
      case MessageKind::kEndDemo:
        return end_demo(m, p);
      case MessageKind::kLearn:
        return learn(m, p);
      case MessageKind::kLoadScene:
        return load_scene(m, p);
      case MessageKind::kExecute:
        return execute(m, p);
      case MessageKind::kPerturb:
        world_ = apply_perturb(world_, p);
        return send(MessageKind::kPerturb, {{"applied", true}, {"world", to_json(world_)}}, m.seq);
      case MessageKind::kSetGoalScene:
        goal_ = goal_scene_from_json(p);
        return send(MessageKind::kSetGoalScene, {{"objects", goal_->objects.size()}}, m.seq);
      case MessageKind::kCompose:
        return compose(m, p);
      case MessageKind::kTickUpdate:
      case MessageKind::kError:
        break;
    }
  }

  void start_demo(const Message& m, const json& p) {
    Demonstration d;
    d.sample_rate_hz = p.value("rate_hz", 100.0);
    if (!(d.sample_rate_hz > 0.0)) fail("invalid rate_hz");
    if (p.contains("meta")) {
      for (const auto& [k, v] : p["meta"].items()) {
        d.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
    recording_ = std::move(d);
    send(MessageKind::kStartDemo, {{"recording", true}}, m.seq);
  }

  /// Samples carrying "objects" are recorded verbatim; otherwise the
  /// session world is stepped with the commanded ee and gripper.
  void demo_sample(const json& p) {
    if (!recording_) fail("no demonstration in progress");
    const double dt = 1.0 / recording_->sample_rate_hz;
    const double t = p.value("t", static_cast<double>(recording_->samples.size()) * dt);
    DemoSample s;
    if (p.contains("objects")) {
      json full = p;
      full["t"] = t;
      s = demo_sample_from_json(full);
    } else {
      world_ = step(world_, pose_from_json(p.at("ee")), p.at("g").get<double>(), dt);
      s.t = t;
      s.ee = world_.ee;
      s.gripper = world_.gripper;
      s.objects = world_.objects;
    }
    recording_->samples.push_back(std::move(s));
  }

  void end_demo(const Message& m, const json& p) {
    if (!recording_) fail("no demonstration in progress");
    Demonstration d = std::move(*recording_);
    recording_.reset();
    validate(d);
    if (p.contains("path")) write_demonstration_file(p["path"].get<std::string>(), d);
    const double duration = d.samples.back().t - d.samples.front().t;
    const std::size_t n = d.samples.size();
    last_demo_ = std::move(d);
    send(MessageKind::kEndDemo, {{"samples", n}, {"duration", duration}}, m.seq);
  }

  void learn(const Message& m, const json& p) {
    Demonstration demo;
    if (p.contains("path")) {
      demo = load_demonstration_file(p["path"].get<std::string>());
    } else if (last_demo_) {
      demo = *last_demo_;
    } else {
      fail("no demonstration recorded");
    }
    LearnOptions opts = server_.opts_.learn;
    opts.segmenter.threshold = p.value("threshold", opts.segmenter.threshold);
    if (p.contains("penalty")) opts.segmenter.penalty = p["penalty"].get<double>();
    LearnResult r = learn_skill(demo, p.at("target").get<std::string>(),
                                p.at("goal").get<std::string>(), p.at("name").get<std::string>(),
                                opts);
    if (p.contains("out_dir")) write_learn_artifacts(r, p["out_dir"].get<std::string>());
    server_.memory_.save_skill(r.record);
    server_.persist();
    send(MessageKind::kLearn,
         {{"skill", r.record.name},
          {"actions", r.actions.size()},
          {"nodes", count_nodes(r.record.tree)},
          {"seconds", r.seconds},
          {"tuple", to_json(r.tuple)},
          {"tree", to_json(r.record.tree)}},
         m.seq);
  }

  void load_scene(const Message& m, const json& p) {
    if (p.contains("scene")) {
      scene_ = scene_from_json(p["scene"]);
    } else if (p.contains("fixture")) {
      scene_ = fixture_by_name(p["fixture"].get<std::string>()).scene;
    } else if (p.contains("path")) {
      scene_ = load_scene_file(p["path"].get<std::string>());
    } else {
      fail("LoadScene needs scene, fixture or path");
    }
    world_ = p.contains("seed") ? randomize_scene(scene_, scene_.area, p["seed"].get<std::uint64_t>())
                                : scene_.world;
    recording_.reset();
    send(MessageKind::kLoadScene, {{"world", to_json(world_)}}, m.seq);
  }

  WorldState apply_perturb(const WorldState& w, const json& p) {
    const ObjectId obj = p.at("object").get<std::string>();
    if (!w.has_object(obj)) fail("unknown object '" + obj + "'");
    Pose7 pose = w.object(obj);
    if (p.contains("pose")) {
      pose = pose_from_json(p["pose"]);
    } else if (p.contains("offset")) {
      const auto o = p["offset"].get<std::vector<double>>();
      if (o.size() != 3) fail("offset must have 3 elements");
      pose.position += Eigen::Vector3d(o[0], o[1], o[2]);
    } else {
      fail("Perturb needs pose or offset");
    }
    return perturb(w, obj, pose);
  }

  void compose(const Message& m, const json& p) {
    if (p.contains("objects")) goal_ = goal_scene_from_json(p);
    if (!goal_) fail("no goal scene: send SetGoalScene first");
    const AdaptedGoal adapted = adapt_goal(*goal_, server_.memory_);
    composite_ = composite_bt(adapted, server_.memory_);
    json matches = json::array();
    for (const auto& s : adapted.matches) {
      matches.push_back({{"skill", s.skill},
                         {"target", s.target},
                         {"anchor", s.anchor},
                         {"goal_object_found", s.goal_object_found}});
    }
    send(MessageKind::kCompose,
         {{"matches", matches},
          {"actions", composite_->actions.size()},
          {"tree", to_json(composite_->tree)}},
         m.seq);
  }

  Program program_for(const json& p) {
    if (p.contains("program")) return program_from_json(p["program"]);
    if (p.value("composite", false)) {
      if (!composite_) fail("no composite tree: send Compose first");
      return *composite_;
    }
    const std::string name = p.at("skill").get<std::string>();
    const auto rec = server_.memory_.by_name(name);
    if (!rec) fail("unknown skill '" + name + "'");
    return program_of(*rec);
  }

  /// Ticks to completion, draining the inbox between ticks. Only Perturb is
  /// served while executing.
  void execute(const Message& m, const json& p) {
    const SessionConfig cfg = session_config(server_.opts_.session, p);
    const long decimation = p.value("decimation", 1L);
    if (decimation < 1) fail("decimation must be >= 1");
    const bool realtime = p.value("realtime", false);
    PerturbationScript script;
    if (p.contains("perturbations")) script = perturbation_script_from_json(p["perturbations"]);
    ExecutionSession session(program_for(p), world_, cfg, std::move(script));

    const auto t0 = std::chrono::steady_clock::now();
    const auto period = std::chrono::duration<double>(1.0 / cfg.tick_rate_hz);
    for (;;) {
      while (auto it = try_pop()) {
        if (it->closed) closing_ = true;
        if (closing_) break;
        if (!it->msg) {
          send_error("gateway", it->error, it->seq);
          continue;
        }
        const Message& in = *it->msg;
        if (!accept(in)) continue;
        if (in.kind != MessageKind::kPerturb) {
          send_error("gateway", "busy: execution in progress", in.seq);
          continue;
        }
        try {
          const WorldState moved = apply_perturb(session.world(), in.payload);
          const ObjectId obj = in.payload.at("object").get<std::string>();
          session.perturb(obj, moved.object(obj));
          send(MessageKind::kPerturb, {{"applied", true}, {"tick", session.trace().ticks()}},
               in.seq);
        } catch (const Error& e) {
          send_error(e.module(), e.what(), in.seq, static_cast<int>(e.exit_code()));
        } catch (const json::exception& e) {
          send_error("gateway", std::string("malformed payload: ") + e.what(), in.seq);
        }
      }
      if (closing_) return;

      TickStatus st = TickStatus::kRunning;
      try {
        st = session.tick();
      } catch (const Error& e) {
        world_ = session.world();
        json payload = {{"module", e.module()},
                        {"message", e.what()},
                        {"code", static_cast<int>(e.exit_code())},
                        {"summary", summary_json(session.trace())}};
        return send(MessageKind::kError, payload, m.seq);
      }
      const auto& trace = session.trace();
      const long n = trace.ticks();
      const bool last = st == TickStatus::kSuccess;
      if (last || (n - 1) % decimation == 0) {
        json u = to_json(trace.records.back());
        u["world"] = to_json(session.world());
        send(MessageKind::kTickUpdate, u, m.seq);
      }
      if (last) break;
      if (realtime) {
        std::this_thread::sleep_until(
            t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     period * static_cast<double>(n)));
      }
    }
    world_ = session.world();
    send(MessageKind::kExecute, summary_json(session.trace()), m.seq);
  }

  Server& server_;
  int fd_;
  std::string id_;
  std::thread reader_;
  std::thread worker_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Item> inbox_;
  std::atomic<bool> closing_{false};
  std::atomic<bool> finished_{false};
  std::int64_t last_seq_ = 0;
  std::int64_t out_seq_ = 0;

  Scene scene_;
  WorldState world_;
  std::optional<Demonstration> recording_;
  std::optional<Demonstration> last_demo_;
  std::optional<GoalScene> goal_;
  std::optional<Program> composite_;
};

Server::Server(ServerOptions opts) : opts_(std::move(opts)) {
  if (!opts_.memory_path.empty()) memory_ = SkillMemory::load(opts_.memory_path);
}

Server::~Server() { stop(); }

void Server::start() {
  if (running_) return;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw ExecutionError("gateway", std::string("socket failed: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(opts_.port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw ExecutionError("gateway", "cannot listen on port " + std::to_string(opts_.port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::unique_ptr<Connection>> conns;
  {
    std::lock_guard lock(conns_mutex_);
    conns.swap(conns_);
  }
  for (auto& c : conns) c->shutdown();
  conns.clear();
}

std::size_t Server::active_sessions() const {
  std::lock_guard lock(conns_mutex_);
  std::size_t n = 0;
  for (const auto& c : conns_) n += c->finished() ? 0 : 1;
  return n;
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (!running_) {
      ::close(fd);
      break;
    }
    reap();
    const std::string id = "s" + std::to_string(next_session_++);
    std::lock_guard lock(conns_mutex_);
    conns_.push_back(std::make_unique<Connection>(*this, fd, id));
  }
}

void Server::reap() {
  std::list<std::unique_ptr<Connection>> done;
  {
    std::lock_guard lock(conns_mutex_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if ((*it)->finished()) {
        done.push_back(std::move(*it));
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }
}

void Server::persist() {
  if (opts_.memory_path.empty()) return;
  std::lock_guard lock(persist_mutex_);
  memory_.save(opts_.memory_path);
}

}  // namespace cobt
