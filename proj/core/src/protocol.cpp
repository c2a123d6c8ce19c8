#include "cobt/protocol.hpp"

#include "cobt/error.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>

namespace cobt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("gateway", msg); }
[[noreturn]] void io_fail(const std::string& msg) {
  throw ExecutionError("gateway", msg + ": " + std::strerror(errno));
}

constexpr std::array<std::pair<MessageKind, const char*>, 11> kKinds{{
    {MessageKind::kStartDemo, "StartDemo"},
    {MessageKind::kDemoSample, "DemoSample"},
    {MessageKind::kEndDemo, "EndDemo"},
    {MessageKind::kLearn, "Learn"},
    {MessageKind::kLoadScene, "LoadScene"},
    {MessageKind::kExecute, "Execute"},
    {MessageKind::kTickUpdate, "TickUpdate"},
    {MessageKind::kPerturb, "Perturb"},
    {MessageKind::kSetGoalScene, "SetGoalScene"},
    {MessageKind::kCompose, "Compose"},
    {MessageKind::kError, "Error"},
}};

std::uint32_t decode_length(const std::string& b) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(b[0])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(b[2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[3]));
}

std::string encode_length(std::uint32_t n) {
  std::string out(4, '\0');
  out[0] = static_cast<char>((n >> 24) & 0xff);
  out[1] = static_cast<char>((n >> 16) & 0xff);
  out[2] = static_cast<char>((n >> 8) & 0xff);
  out[3] = static_cast<char>(n & 0xff);
  return out;
}

/// False on orderly close before any byte; throws on a short read.
bool read_exact(int fd, char* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw ExecutionError("gateway", "connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      io_fail("recv failed");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

std::string to_string(MessageKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "Error";
}

MessageKind message_kind_from(const std::string& s) {
  for (const auto& [kind, name] : kKinds) {
    if (s == name) return kind;
  }
  fail("unknown message kind '" + s + "'");
}

json to_json(const Message& m) {
  return {{"kind", to_string(m.kind)},
          {"session", m.session},
          {"seq", m.seq},
          {"reply_to", m.reply_to},
          {"payload", m.payload}};
}

Message message_from_json(const json& j) {
  if (!j.is_object()) fail("message must be a JSON object");
  Message m;
  try {
    m.kind = message_kind_from(j.at("kind").get<std::string>());
    m.seq = j.at("seq").get<std::int64_t>();
    m.session = j.value("session", std::string());
    m.reply_to = j.value("reply_to", std::int64_t{0});
    m.payload = j.value("payload", json::object());
    if (m.payload.is_null()) m.payload = json::object();
  } catch (const json::exception& e) {
    fail(std::string("malformed message: ") + e.what());
  }
  if (!m.payload.is_object()) fail("payload must be a JSON object");
  return m;
}

std::string encode_frame(const Message& m) {
  const std::string body = to_json(m).dump();
  if (body.size() > kMaxFrameBytes) fail("frame too large");
  return encode_length(static_cast<std::uint32_t>(body.size())) + body;
}

std::optional<std::string> pop_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const std::uint32_t n = decode_length(buffer);
  if (n > kMaxFrameBytes) fail("frame too large");
  if (buffer.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string body = buffer.substr(4, n);
  buffer.erase(0, 4 + static_cast<std::size_t>(n));
  return body;
}

std::optional<std::string> read_frame(int fd) {
  std::string header(4, '\0');
  if (!read_exact(fd, header.data(), 4)) return std::nullopt;
  const std::uint32_t n = decode_length(header);
  if (n > kMaxFrameBytes) fail("frame too large");
  std::string body(n, '\0');
  if (n > 0 && !read_exact(fd, body.data(), n)) {
    throw ExecutionError("gateway", "connection closed mid-frame");
  }
  return body;
}

void write_frame(int fd, const std::string& frame) {
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t r = ::send(fd, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      io_fail("send failed");
    }
    sent += static_cast<std::size_t>(r);
  }
}

Client::~Client() { close(); }

void Client::connect(int port) {
  close();
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) io_fail("socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    io_fail("connect to port " + std::to_string(port) + " failed");
  }
  fd_ = fd;
  seq_ = 1;
  session_.clear();
  buffer_.clear();
  backlog_.clear();
}

void Client::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

std::int64_t Client::send(MessageKind kind, json payload) {
  if (fd_ < 0) throw ExecutionError("gateway", "client not connected");
  Message m;
  m.kind = kind;
  m.session = session_;
  m.seq = seq_++;
  m.payload = payload.is_null() ? json::object() : std::move(payload);
  write_frame(fd_, encode_frame(m));
  return m.seq;
}

void Client::send_raw(const std::string& body) {
  if (fd_ < 0) throw ExecutionError("gateway", "client not connected");
  write_frame(fd_, encode_length(static_cast<std::uint32_t>(body.size())) + body);
}

std::optional<Message> Client::receive(std::chrono::milliseconds timeout) {
  if (!backlog_.empty()) {
    Message m = std::move(backlog_.front());
    backlog_.pop_front();
    return m;
  }
  return receive_socket(timeout);
}

std::optional<Message> Client::receive_socket(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (fd_ >= 0) {
    if (auto body = pop_frame(buffer_)) {
      Message m = message_from_json(json::parse(*body));
      if (session_.empty()) session_ = m.session;
      return m;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0) {
      if (errno == EINTR) continue;
      io_fail("poll failed");
    }
    if (r == 0) return std::nullopt;
    char chunk[65536];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n <= 0) {
      close();
      return std::nullopt;
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  return std::nullopt;
}

Message Client::request(MessageKind kind, json payload, std::chrono::milliseconds timeout) {
  const std::int64_t seq = send(kind, std::move(payload));
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    std::optional<Message> m = left.count() > 0 ? receive_socket(left) : std::nullopt;
    if (!m) throw ExecutionError("gateway", "no reply to " + to_string(kind));
    if (m->reply_to == seq && (m->kind == kind || m->kind == MessageKind::kError)) return *m;
    backlog_.push_back(std::move(*m));
  }
}

}  // namespace cobt
