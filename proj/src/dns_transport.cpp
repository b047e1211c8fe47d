#include "admal/dns_transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <random>

#include "admal/error.hpp"

namespace admal::dns {
namespace {

using SteadyClock = std::chrono::steady_clock;

class Socket {
 public:
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

 private:
  int fd_;
};

struct SockAddr {
  sockaddr_storage storage{};
  socklen_t len = 0;
  int family = AF_INET;
};

SockAddr to_sockaddr(const Endpoint& ep) {
  SockAddr sa;
  auto* v4 = reinterpret_cast<sockaddr_in*>(&sa.storage);
  if (inet_pton(AF_INET, ep.ip.c_str(), &v4->sin_addr) == 1) {
    v4->sin_family = AF_INET;
    v4->sin_port = htons(ep.port);
    sa.len = sizeof(sockaddr_in);
    sa.family = AF_INET;
    return sa;
  }
  auto* v6 = reinterpret_cast<sockaddr_in6*>(&sa.storage);
  if (inet_pton(AF_INET6, ep.ip.c_str(), &v6->sin6_addr) == 1) {
    v6->sin6_family = AF_INET6;
    v6->sin6_port = htons(ep.port);
    sa.len = sizeof(sockaddr_in6);
    sa.family = AF_INET6;
    return sa;
  }
  fail(ErrorCode::Config, "invalid resolver address: " + ep.ip);
}

std::uint16_t random_id() {
  thread_local std::mt19937 rng{std::random_device{}()};
  return static_cast<std::uint16_t>(rng() & 0xFFFF);
}

int remaining_ms(SteadyClock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - SteadyClock::now()).count();
  return left > 0 ? static_cast<int>(left) : 0;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    char x = a[i], y = b[i];
    if (x >= 'A' && x <= 'Z') x = static_cast<char>(x + 32);
    if (y >= 'A' && y <= 'Z') y = static_cast<char>(y + 32);
    if (x != y) return false;
  }
  return true;
}

bool matches_query(const Message& m, std::uint16_t id, const Domain& domain, QType qtype) {
  if (m.id != id || !m.qr) return false;
  if (m.questions.size() != 1) return false;
  const auto& q = m.questions.front();
  return q.type == static_cast<std::uint16_t>(qtype) && iequals(q.name, domain.str());
}

struct Attempt {
  std::optional<Message> msg;
  std::optional<QueryFailure> failure;
};

Attempt udp_attempt(const SockAddr& sa, const Domain& domain, QType qtype, const QueryOptions& opts) {
  Socket sock(::socket(sa.family, SOCK_DGRAM | SOCK_CLOEXEC, 0));
  if (!sock.valid()) return {std::nullopt, QueryFailure::Network};
  if (::connect(sock.get(), reinterpret_cast<const sockaddr*>(&sa.storage), sa.len) != 0) {
    return {std::nullopt, QueryFailure::Network};
  }
  const auto id = random_id();
  const auto query = build_query(domain, qtype, id, opts.edns);
  if (::send(sock.get(), query.data(), query.size(), 0) != static_cast<ssize_t>(query.size())) {
    return {std::nullopt, QueryFailure::Network};
  }
  const auto deadline = SteadyClock::now() + opts.timeout;
  bool saw_malformed = false;
  std::vector<std::uint8_t> buf(65535);
  while (true) {
    const int wait = remaining_ms(deadline);
    if (wait <= 0) break;
    pollfd pfd{sock.get(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, wait);
    if (rc < 0) {
      if (errno == EINTR) continue;
      return {std::nullopt, QueryFailure::Network};
    }
    if (rc == 0) break;
    const auto n = ::recv(sock.get(), buf.data(), buf.size(), 0);
    if (n < 0) {
      // ICMP port unreachable surfaces as ECONNREFUSED on a connected socket.
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == ECONNREFUSED) continue;
      return {std::nullopt, QueryFailure::Network};
    }
    try {
      auto msg = parse_message(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
      if (matches_query(msg, id, domain, qtype)) return {std::move(msg), std::nullopt};
    } catch (const Error&) {
      saw_malformed = true;
    }
  }
  return {std::nullopt, saw_malformed ? QueryFailure::Malformed : QueryFailure::Timeout};
}

bool wait_fd(int fd, short events, SteadyClock::time_point deadline) {
  while (true) {
    const int wait = remaining_ms(deadline);
    if (wait <= 0) return false;
    pollfd pfd{fd, events, 0};
    const int rc = ::poll(&pfd, 1, wait);
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) return false;
  }
}

bool read_exact(int fd, std::uint8_t* out, std::size_t n, SteadyClock::time_point deadline) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_fd(fd, POLLIN, deadline)) return false;
    const auto r = ::recv(fd, out + got, n - got, 0);
    if (r < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

Attempt tcp_attempt(const SockAddr& sa, const Domain& domain, QType qtype, const QueryOptions& opts) {
  Socket sock(::socket(sa.family, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
  if (!sock.valid()) return {std::nullopt, QueryFailure::Network};
  const auto deadline = SteadyClock::now() + opts.timeout;
  if (::connect(sock.get(), reinterpret_cast<const sockaddr*>(&sa.storage), sa.len) != 0) {
    if (errno != EINPROGRESS) return {std::nullopt, QueryFailure::Network};
    if (!wait_fd(sock.get(), POLLOUT, deadline)) return {std::nullopt, QueryFailure::Timeout};
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(sock.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) return {std::nullopt, QueryFailure::Network};
  }
  const auto id = random_id();
  const auto query = build_query(domain, qtype, id, opts.edns);
  std::vector<std::uint8_t> framed;
  framed.reserve(query.size() + 2);
  framed.push_back(static_cast<std::uint8_t>(query.size() >> 8));
  framed.push_back(static_cast<std::uint8_t>(query.size() & 0xFF));
  framed.insert(framed.end(), query.begin(), query.end());
  std::size_t sent = 0;
  while (sent < framed.size()) {
    if (!wait_fd(sock.get(), POLLOUT, deadline)) return {std::nullopt, QueryFailure::Timeout};
    const auto w = ::send(sock.get(), framed.data() + sent, framed.size() - sent, MSG_NOSIGNAL);
    if (w < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (w <= 0) return {std::nullopt, QueryFailure::Network};
    sent += static_cast<std::size_t>(w);
  }
  std::uint8_t len_buf[2];
  if (!read_exact(sock.get(), len_buf, 2, deadline)) return {std::nullopt, QueryFailure::Timeout};
  const std::size_t len = (static_cast<std::size_t>(len_buf[0]) << 8) | len_buf[1];
  std::vector<std::uint8_t> body(len);
  if (!read_exact(sock.get(), body.data(), len, deadline)) return {std::nullopt, QueryFailure::Timeout};
  try {
    auto msg = parse_message(body);
    if (!matches_query(msg, id, domain, qtype)) return {std::nullopt, QueryFailure::Mismatch};
    return {std::move(msg), std::nullopt};
  } catch (const Error&) {
    return {std::nullopt, QueryFailure::Malformed};
  }
}

}  // namespace

const char* to_string(QueryFailure f) {
  switch (f) {
    case QueryFailure::Timeout: return "timeout";
    case QueryFailure::Network: return "network-error";
    case QueryFailure::Malformed: return "malformed-response";
    case QueryFailure::Mismatch: return "mismatched-response";
  }
  return "unknown";
}

Endpoint Endpoint::parse(std::string_view text) {
  Endpoint ep;
  std::string_view host = text;
  std::string_view port;
  if (!text.empty() && text.front() == '[') {
    auto close = text.find(']');
    if (close == std::string_view::npos) fail(ErrorCode::Config, "bad address: " + std::string(text));
    host = text.substr(1, close - 1);
    auto rest = text.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') fail(ErrorCode::Config, "bad address: " + std::string(text));
      port = rest.substr(1);
    }
  } else if (std::count(text.begin(), text.end(), ':') == 1) {
    auto colon = text.find(':');
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  if (!parse_ip(host)) fail(ErrorCode::Config, "bad address: " + std::string(text));
  ep.ip = std::string(host);
  if (!port.empty()) {
    unsigned value = 0;
    auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
    if (ec != std::errc{} || p != port.data() + port.size() || value > 65535) {
      fail(ErrorCode::Config, "bad port: " + std::string(text));
    }
    ep.port = static_cast<std::uint16_t>(value);
  }
  return ep;
}

std::string Endpoint::to_string() const {
  if (ip.find(':') != std::string::npos) return "[" + ip + "]:" + std::to_string(port);
  return ip + ":" + std::to_string(port);
}

QueryOutcome resolve(const Endpoint& server, const Domain& domain, QType qtype, const QueryOptions& opts) {
  const auto sa = to_sockaddr(server);
  QueryOutcome out;
  QueryFailure last = QueryFailure::Timeout;
  const int tries = 1 + std::max(0, opts.retries);
  for (int i = 0; i < tries; ++i) {
    ++out.attempts;
    const auto started = SteadyClock::now();
    Attempt a;
    if (opts.transport == Transport::Tcp) {
      out.transport_used = "tcp";
      a = tcp_attempt(sa, domain, qtype, opts);
    } else {
      out.transport_used = "udp";
      a = udp_attempt(sa, domain, qtype, opts);
      if (a.msg && a.msg->tc) {
        out.transport_used = "tcp";
        auto t = tcp_attempt(sa, domain, qtype, opts);
        // Keep the truncated UDP answer if TCP is unavailable.
        if (t.msg) a = std::move(t);
      }
    }
    if (a.msg) {
      DnsResponse resp;
      resp.msg = std::move(*a.msg);
      resp.latency_ms = static_cast<std::uint32_t>(
          std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - started).count());
      out.result = std::move(resp);
      return out;
    }
    last = *a.failure;
  }
  out.result = last;
  return out;
}

}  // namespace admal::dns
