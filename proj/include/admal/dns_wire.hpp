#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "admal/domain.hpp"

namespace admal::dns {

enum class QType : std::uint16_t {
  A = 1,
  NS = 2,
  CNAME = 5,
  SOA = 6,
  AAAA = 28,
  OPT = 41,
};

enum Rcode : int {
  kNoError = 0,
  kFormErr = 1,
  kServFail = 2,
  kNxDomain = 3,
  kNotImp = 4,
  kRefused = 5,
};

constexpr std::uint16_t kEdnsUdpSize = 1232;

struct ResourceRecord {
  std::string name;
  std::uint16_t type = 0;
  std::uint16_t klass = 1;
  std::uint32_t ttl = 0;
  std::vector<std::uint8_t> rdata;

  // Dotted-quad / RFC 5952 text for A/AAAA, decoded name for CNAME/NS,
  // hex for anything else.
  std::string rdata_text() const;
};

struct Question {
  std::string name;
  std::uint16_t type = 0;
  std::uint16_t klass = 1;
};

struct Message {
  std::uint16_t id = 0;
  bool qr = false;
  std::uint8_t opcode = 0;
  bool aa = false;
  bool tc = false;
  bool rd = false;
  bool ra = false;
  bool ad = false;
  bool cd = false;
  int rcode = 0;
  std::vector<Question> questions;
  std::vector<ResourceRecord> answers;
  std::vector<ResourceRecord> authority;
  std::vector<ResourceRecord> additional;
};

// Parsed response plus the latency observed by the transport.
struct DnsResponse {
  Message msg;
  std::uint32_t latency_ms = 0;

  int rcode() const { return msg.rcode; }
  bool truncated() const { return msg.tc; }
  const std::vector<ResourceRecord>& answers() const { return msg.answers; }
};

// Standard query, RD=1, one question, optionally with an EDNS0 OPT record
// advertising kEdnsUdpSize.
std::vector<std::uint8_t> build_query(const Domain& domain, QType qtype,
                                      std::uint16_t id, bool edns = true);

// Full RFC 1035 parse with compression-pointer support. Throws
// Error{MalformedMessage} on truncation, pointer loops or overruns.
Message parse_message(std::span<const std::uint8_t> bytes);

DnsResponse parse_response(std::span<const std::uint8_t> bytes);

// Encoder used by the mock server: header, questions and answers, with
// answer owner names compressed against the first question.
std::vector<std::uint8_t> encode_message(const Message& msg);

// Text form of raw A (4 bytes) / AAAA (16 bytes) rdata; nullopt otherwise.
std::optional<std::string> ip_text(std::span<const std::uint8_t> rdata);

// Parses an IPv4/IPv6 literal into network-order bytes (4 or 16).
std::optional<std::vector<std::uint8_t>> parse_ip(std::string_view text);

// Canonical textual form of an IP literal ("::0" -> "::"); nullopt if invalid.
std::optional<std::string> canonical_ip(std::string_view text);

}  // namespace admal::dns
