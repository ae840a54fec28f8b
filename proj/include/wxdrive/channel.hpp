#pragma once

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include "wxdrive/agent.hpp"
#include "wxdrive/error.hpp"

namespace wxdrive {

/// Line-oriented, strictly sequential request/reply link to an agent.
class AgentChannel {
 public:
  virtual ~AgentChannel() = default;

  /// Sends one record and waits for one reply line. Returns nullopt on
  /// timeout. Throws TransportError when the link is broken.
  virtual std::optional<std::string> exchange(const std::string& record,
                                              std::chrono::milliseconds timeout) = 0;

  /// Re-establishes a broken link if the transport supports it.
  virtual bool reconnect() { return false; }

  virtual std::string describe() const = 0;
};

/// In-process channel driven by a callable; used for echo and fuzz agents.
class LoopbackChannel final : public AgentChannel {
 public:
  using Responder = std::function<std::optional<std::string>(const std::string&)>;

  explicit LoopbackChannel(Responder responder, std::string name = "loopback")
      : responder_(std::move(responder)), name_(std::move(name)) {}

  std::optional<std::string> exchange(const std::string& record, std::chrono::milliseconds) override {
    return responder_(record);
  }

  std::string describe() const override { return name_; }

 private:
  Responder responder_;
  std::string name_;
};

namespace detail {

inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) {
      const ssize_t m = ::write(fd, data.data(), data.size());
      if (m < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("agent write failed: ") + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(m));
      continue;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("agent write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace detail

/// Shared machinery for file-descriptor transports. Replies that arrive
/// after their request timed out are discarded so the stream stays aligned.
class FdChannel : public AgentChannel {
 public:
  FdChannel() = default;
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  std::optional<std::string> exchange(const std::string& record,
                                      std::chrono::milliseconds timeout) override {
    if (read_fd_ < 0 || write_fd_ < 0) throw TransportError(describe() + ": not connected");
    detail::write_all(write_fd_, record + "\n");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto line = read_line(deadline);
      if (!line) {
        ++stale_;
        return std::nullopt;
      }
      if (stale_ > 0) {
        --stale_;
        continue;
      }
      return line;
    }
  }

 protected:
  void reset_stream() {
    buffer_.clear();
    stale_ = 0;
  }

  int read_fd_ = -1;
  int write_fd_ = -1;

 private:
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{read_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) return std::nullopt;
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError(describe() + ": read failed: " + std::strerror(errno));
      }
      if (n == 0) throw TransportError(describe() + ": agent closed the stream");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string buffer_;
  int stale_ = 0;
};

/// Child process speaking the protocol on its standard input/output.
class ProcessChannel final : public FdChannel {
 public:
  explicit ProcessChannel(std::string command) : command_(std::move(command)) { launch(); }

  ~ProcessChannel() override { shutdown(); }

  bool reconnect() override {
    shutdown();
    launch();
    return true;
  }

  std::string describe() const override { return "proc:" + command_; }

 private:
  void launch() {
    // A dead child must surface as EPIPE, not kill the harness.
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError("pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw TransportError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    reset_stream();
  }

  void shutdown() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
          pid_ = -1;
          return;
        }
        ::usleep(10000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
      pid_ = -1;
    }
  }

  std::string command_;
  pid_t pid_ = -1;
};

/// TCP client connection to an agent server.
class TcpChannel final : public FdChannel {
 public:
  TcpChannel(std::string host, std::string port) : host_(std::move(host)), port_(std::move(port)) {
    connect();
  }

  ~TcpChannel() override { close_socket(); }

  bool reconnect() override {
    close_socket();
    connect();
    return true;
  }

  std::string describe() const override { return "tcp:" + host_ + ":" + port_; }

 private:
  void connect() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (const int rc = ::getaddrinfo(host_.c_str(), port_.c_str(), &hints, &res); rc != 0) {
      throw TransportError(describe() + ": " + ::gai_strerror(rc));
    }
    int fd = -1;
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw TransportError(describe() + ": connection failed");
    read_fd_ = write_fd_ = fd;
    reset_stream();
  }

  void close_socket() {
    if (read_fd_ >= 0) ::close(read_fd_);
    read_fd_ = write_fd_ = -1;
  }

  std::string host_;
  std::string port_;
};

/// Opens `proc:<command>` or `tcp:<host>:<port>`.
inline std::unique_ptr<AgentChannel> open_channel(std::string_view target) {
  if (target.starts_with("proc:")) {
    return std::make_unique<ProcessChannel>(std::string(target.substr(5)));
  }
  if (target.starts_with("tcp:")) {
    const auto rest = target.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == rest.size()) {
      throw ConfigError("agent target must look like tcp:host:port");
    }
    return std::make_unique<TcpChannel>(std::string(rest.substr(0, colon)),
                                        std::string(rest.substr(colon + 1)));
  }
  throw ConfigError("unknown agent target '" + std::string(target) + "'");
}

/// One request/response round trip. Unusable replies (timeout, malformed
/// record, no parseable decision) yield the decelerate fallback. A broken
/// transport is retried `retries` times via reconnect, then rethrown.
inline AgentResponse request_decision(AgentChannel& channel, const AgentRequest& req,
                                      std::chrono::milliseconds timeout, int retries = 1) {
  const std::string record = encode_request(req);
  const auto start = std::chrono::steady_clock::now();
  std::optional<std::string> reply;
  for (int attempt = 0;; ++attempt) {
    try {
      reply = channel.exchange(record, timeout);
      break;
    } catch (const TransportError& e) {
      if (attempt >= retries || !channel.reconnect()) throw;
      spdlog::warn("frame {}: {}; reconnecting", req.frame, e.what());
    }
  }
  const double latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  AgentResponse out = fallback_response();
  out.latency_ms = latency;
  if (!reply) {
    spdlog::warn("frame {}: agent timed out after {} ms; using fallback", req.frame, timeout.count());
    return out;
  }
  try {
    std::string text = decode_response_text(*reply);
    out.decision = parse_decision(text);
    out.rationale = std::move(text);
    out.fallback = false;
  } catch (const ParseError& e) {
    spdlog::warn("frame {}: unusable agent reply ({}); using fallback", req.frame, e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Agents as seen by the run loop

class Agent {
 public:
  virtual ~Agent() = default;
  virtual AgentResponse decide(const AgentRequest& req, const Observation& obs) = 0;
  virtual std::string describe() const = 0;
};

/// In-process policy; never falls back.
class PolicyAgent final : public Agent {
 public:
  PolicyAgent(Policy policy, std::string name) : policy_(std::move(policy)), name_(std::move(name)) {}

  AgentResponse decide(const AgentRequest&, const Observation& obs) override {
    const Decision d = policy_(obs);
    return {d, render_decision(d), 0.0, false};
  }

  std::string describe() const override { return name_; }

 private:
  Policy policy_;
  std::string name_;
};

/// Agent reached through the wire protocol.
class RemoteAgent final : public Agent {
 public:
  RemoteAgent(std::unique_ptr<AgentChannel> channel, std::chrono::milliseconds timeout, int retries = 1)
      : channel_(std::move(channel)), timeout_(timeout), retries_(retries) {}

  AgentResponse decide(const AgentRequest& req, const Observation&) override {
    return request_decision(*channel_, req, timeout_, retries_);
  }

  std::string describe() const override { return channel_->describe(); }

 private:
  std::unique_ptr<AgentChannel> channel_;
  std::chrono::milliseconds timeout_;
  int retries_;
};

/// Resolves `builtin:<baseline|cautious|aggressive>`, `proc:<cmd>` or
/// `tcp:<host>:<port>`.
inline std::unique_ptr<Agent> make_agent(std::string_view target, std::chrono::milliseconds timeout,
                                         int retries = 1) {
  if (target == "builtin:baseline") {
    return std::make_unique<PolicyAgent>([](const Observation& o) { return baseline_agent(o); },
                                         std::string(target));
  }
  if (target == "builtin:cautious") {
    return std::make_unique<PolicyAgent>([](const Observation& o) { return cautious_policy(o); },
                                         std::string(target));
  }
  if (target == "builtin:aggressive") {
    return std::make_unique<PolicyAgent>([](const Observation& o) { return aggressive_policy(o); },
                                         std::string(target));
  }
  return std::make_unique<RemoteAgent>(open_channel(target), timeout, retries);
}

inline bool is_known_agent_target(std::string_view target) {
  return target == "builtin:baseline" || target == "builtin:cautious" ||
         target == "builtin:aggressive" || (target.starts_with("proc:") && target.size() > 5) ||
         (target.starts_with("tcp:") && target.size() > 4);
}

}  // namespace wxdrive
