#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "admal/dns_wire.hpp"

namespace admal::dns {

struct Endpoint {
  std::string ip;
  std::uint16_t port = 53;

  // "1.1.1.2", "1.1.1.2:53", "[2606:4700::1111]:53". Throws Error{Config}.
  static Endpoint parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

enum class Transport { UdpWithTcpFallback, Tcp };

struct QueryOptions {
  Transport transport = Transport::UdpWithTcpFallback;
  std::chrono::milliseconds timeout{3000};
  int retries = 2;
  bool edns = true;
};

// Why a query produced no usable response.
enum class QueryFailure { Timeout, Network, Malformed, Mismatch };

const char* to_string(QueryFailure f);

struct QueryOutcome {
  std::variant<DnsResponse, QueryFailure> result;
  std::string transport_used;  // "udp" or "tcp"
  int attempts = 0;

  bool ok() const { return std::holds_alternative<DnsResponse>(result); }
  const DnsResponse& response() const { return std::get<DnsResponse>(result); }
  QueryFailure failure() const { return std::get<QueryFailure>(result); }
};

// Sends one question and waits for the matching response. Responses whose
// id or question differ from the query are ignored until the deadline.
// Retries on timeout; falls back to TCP when the UDP answer has TC set.
QueryOutcome resolve(const Endpoint& server, const Domain& domain, QType qtype,
                     const QueryOptions& opts);

}  // namespace admal::dns
