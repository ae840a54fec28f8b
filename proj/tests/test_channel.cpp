#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "wxdrive/channel.hpp"

using namespace wxdrive;
using namespace std::chrono_literals;

namespace {

std::string echo(const std::string& args = "") { return std::string("proc:") + WXDRIVE_ECHO_AGENT + " " + args; }

AgentRequest sample_request(std::int64_t frame = 10) {
  AgentRequest req;
  req.frame = frame;
  req.prompt = {"system", "scene", "task"};
  return req;
}

// Minimal single-connection TCP agent on an ephemeral loopback port.
class TcpEchoServer {
 public:
  explicit TcpEchoServer(std::string reply_text) : reply_(std::move(reply_text)) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    ::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(listen_fd_, 1);
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  ~TcpEchoServer() {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    thread_.join();
  }

  int port() const { return port_; }
  int served() const { return served_; }

 private:
  void serve() {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    std::string buf;
    char chunk[4096];
    for (;;) {
      const ssize_t n = ::read(fd, chunk, sizeof chunk);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = buf.find('\n')) != std::string::npos) {
        buf.erase(0, nl + 1);
        const std::string out = encode_response(reply_) + "\n";
        ::send(fd, out.data(), out.size(), MSG_NOSIGNAL);
        ++served_;
      }
    }
    ::close(fd);
  }

  std::string reply_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<int> served_{0};
  std::thread thread_;
};

}  // namespace

TEST(Channel, EchoProcessAnswersIdle) {
  auto ch = open_channel(echo());
  const auto r = request_decision(*ch, sample_request(), 2000ms);
  EXPECT_EQ(r.decision, Decision::Idle);
  EXPECT_FALSE(r.fallback);
  EXPECT_NE(r.rationale.find("DECISION: idle"), std::string::npos);
}

TEST(Channel, EchoProcessAnswersTurnLeftRepeatedly) {
  auto ch = open_channel(echo("--decision turn_left"));
  for (int i = 0; i < 5; ++i) {
    const auto r = request_decision(*ch, sample_request(i), 2000ms);
    EXPECT_EQ(r.decision, Decision::TurnLeft);
  }
}

TEST(Channel, TimeoutFallsBackAndDropsLateReply) {
  auto ch = open_channel(echo("--delay-ms 300 --decision accelerate"));
  const auto late = request_decision(*ch, sample_request(1), 50ms);
  EXPECT_TRUE(late.fallback);
  EXPECT_EQ(late.decision, Decision::Decelerate);
  EXPECT_EQ(late.rationale, "fallback");
  // The stale reply to frame 1 must not be taken as the answer to frame 2.
  const auto next = request_decision(*ch, sample_request(2), 2000ms);
  EXPECT_FALSE(next.fallback);
  EXPECT_EQ(next.decision, Decision::Accelerate);
  EXPECT_GE(next.latency_ms, 250.0);
}

TEST(Channel, GarbageReplyFallsBack) {
  auto ch = open_channel(echo("--garbage"));
  const auto r = request_decision(*ch, sample_request(), 2000ms);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.decision, Decision::Decelerate);
}

TEST(Channel, UnparseableDecisionFallsBack) {
  auto ch = open_channel(echo("--decision fly"));
  EXPECT_TRUE(request_decision(*ch, sample_request(), 2000ms).fallback);
}

TEST(Channel, DeadAgentIsTransportFailureAfterRetry) {
  auto ch = open_channel(echo("--exit-after 0"));
  EXPECT_THROW(request_decision(*ch, sample_request(), 2000ms, 1), TransportError);
}

TEST(Channel, ReconnectRecoversAfterCrash) {
  auto ch = open_channel(echo("--exit-after 1"));
  EXPECT_FALSE(request_decision(*ch, sample_request(1), 2000ms).fallback);
  // Second request hits a dead child; reconnect spawns a fresh one.
  const auto r = request_decision(*ch, sample_request(2), 2000ms, 1);
  EXPECT_FALSE(r.fallback);
  EXPECT_EQ(r.decision, Decision::Idle);
}

TEST(Channel, TcpAgentRoundTrip) {
  TcpEchoServer server("Lane is free. DECISION: turn_right");
  auto ch = open_channel("tcp:127.0.0.1:" + std::to_string(server.port()));
  for (int i = 0; i < 3; ++i) {
    const auto r = request_decision(*ch, sample_request(i), 2000ms);
    EXPECT_EQ(r.decision, Decision::TurnRight);
    EXPECT_FALSE(r.fallback);
  }
}

TEST(Channel, TcpConnectionRefused) {
  // Bind then close to obtain a port that is very likely unused.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  EXPECT_THROW(open_channel("tcp:127.0.0.1:" + std::to_string(ntohs(addr.sin_port))), TransportError);
}

TEST(Channel, MalformedTargets) {
  EXPECT_THROW(open_channel("tcp:nohost"), ConfigError);
  EXPECT_THROW(open_channel("smoke-signals"), ConfigError);
  EXPECT_THROW(make_agent("builtin:nobody", 100ms), ConfigError);
  EXPECT_TRUE(is_known_agent_target("builtin:baseline"));
  EXPECT_TRUE(is_known_agent_target("tcp:localhost:9000"));
  EXPECT_FALSE(is_known_agent_target("builtin:nobody"));
}

TEST(Channel, LoopbackRequestCarriesPromptAndHistory) {
  std::string seen;
  LoopbackChannel ch([&](const std::string& rec) -> std::optional<std::string> {
    seen = rec;
    return encode_response("DECISION: decelerate");
  });
  auto req = sample_request(40);
  req.history.push_back({1, 30, Decision::Idle, 0.5, MemoryStatus::AcceptedAfterReflection, "slow"});
  EXPECT_EQ(request_decision(ch, req, 10ms).decision, Decision::Decelerate);
  const auto j = nlohmann::json::parse(seen);
  EXPECT_EQ(j.at("frame"), 40);
  EXPECT_EQ(j.at("history")[0].at("note"), "slow");
}

TEST(Channel, LoopbackSilenceIsFallback) {
  LoopbackChannel ch([](const std::string&) -> std::optional<std::string> { return std::nullopt; });
  EXPECT_TRUE(request_decision(ch, sample_request(), 10ms).fallback);
}
