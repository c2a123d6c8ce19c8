#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>

namespace cobt {

/// Wire format: 4-byte big-endian length, then a UTF-8 JSON object
/// {"kind", "session", "seq", "reply_to", "payload"}. Each side numbers its
/// own messages with strictly increasing seq; server messages carry the seq
/// of the client message they answer in reply_to (0 when unsolicited).
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

enum class MessageKind {
  kStartDemo,
  kDemoSample,
  kEndDemo,
  kLearn,
  kLoadScene,
  kExecute,
  kTickUpdate,
  kPerturb,
  kSetGoalScene,
  kCompose,
  kError,
};

std::string to_string(MessageKind k);
MessageKind message_kind_from(const std::string& s);

struct Message {
  MessageKind kind = MessageKind::kError;
  std::string session;
  std::int64_t seq = 0;
  std::int64_t reply_to = 0;
  nlohmann::json payload = nlohmann::json::object();
};

nlohmann::json to_json(const Message& m);
/// Throws ValidationError on a malformed envelope.
Message message_from_json(const nlohmann::json& j);

std::string encode_frame(const Message& m);
/// Pops one complete frame from the front of `buffer` if present.
/// Throws ValidationError on an oversized length prefix.
std::optional<std::string> pop_frame(std::string& buffer);

/// Blocking helpers over a connected stream socket. read_frame returns
/// nothing on orderly close; both throw ExecutionError on I/O failure.
std::optional<std::string> read_frame(int fd);
void write_frame(int fd, const std::string& frame);

/// Synchronous client for the gateway.
class Client {
 public:
  Client() = default;
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Connects to 127.0.0.1:port.
  void connect(int port);
  void close();
  bool connected() const { return fd_ >= 0; }

  /// Sends with the next client seq; returns it.
  std::int64_t send(MessageKind kind, nlohmann::json payload = nlohmann::json::object());
  /// Sends a raw frame body (for protocol tests).
  void send_raw(const std::string& body);
  /// Next message from the server; nothing on timeout or close.
  std::optional<Message> receive(std::chrono::milliseconds timeout = std::chrono::seconds(30));
  /// Sends then waits for the reply (same kind, or Error) to it. Messages
  /// received meanwhile (TickUpdate) are kept in backlog().
  Message request(MessageKind kind, nlohmann::json payload = nlohmann::json::object(),
                  std::chrono::milliseconds timeout = std::chrono::seconds(60));

  std::deque<Message>& backlog() { return backlog_; }
  const std::string& session() const { return session_; }
  void set_seq(std::int64_t next) { seq_ = next; }

 private:
  std::optional<Message> receive_socket(std::chrono::milliseconds timeout);

  int fd_ = -1;
  std::int64_t seq_ = 1;
  std::string session_;
  std::string buffer_;
  std::deque<Message> backlog_;
};

}  // namespace cobt
