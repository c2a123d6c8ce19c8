#pragma once

#include "cobt/memory.hpp"
#include "cobt/pipeline.hpp"
#include "cobt/protocol.hpp"
#include "cobt/runtime.hpp"

#include <atomic>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace cobt {

struct ServerOptions {
  int port = 0;             // 0 picks a free port
  std::string memory_path;  // empty keeps the memory in-process only
  SessionConfig session;
  LearnOptions learn;
};

/// Loopback TCP gateway. One session per connection; sessions share the
/// skill memory and nothing else.
class Server {
 public:
  explicit Server(ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds 127.0.0.1 and starts accepting. Throws ExecutionError on failure.
  void start();
  /// Closes the listener and every session, then joins all threads.
  void stop();
  int port() const { return port_; }
  bool running() const { return running_; }

  SkillMemory& memory() { return memory_; }
  std::size_t active_sessions() const;

  class Connection;

 private:
  void accept_loop();
  void reap();
  /// Saves the shared memory to memory_path (serialized across sessions).
  void persist();

  friend class Connection;

  ServerOptions opts_;
  SkillMemory memory_;
  std::mutex persist_mutex_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<long> next_session_{1};
  std::thread acceptor_;
  mutable std::mutex conns_mutex_;
  std::list<std::unique_ptr<Connection>> conns_;
};

}  // namespace cobt
