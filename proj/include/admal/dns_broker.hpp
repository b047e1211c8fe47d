#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "admal/dns_transport.hpp"
#include "admal/dns_wire.hpp"
#include "admal/domain.hpp"
#include "admal/repository.hpp"
#include "admal/util.hpp"
#include "json.hpp"

namespace admal::dns {

enum class SignatureKind { SinkholeA, SinkholeAAAA, Nxdomain, Refused, ZeroAnswerNoError };

const char* to_string(SignatureKind kind);
std::optional<SignatureKind> parse_signature_kind(std::string_view s);

struct BlockSignature {
  SignatureKind kind = SignatureKind::Nxdomain;
  std::vector<std::string> sinkhole_ips;  // canonical text; Sinkhole kinds only

  // Throws Error{Config} when a Sinkhole kind has no IPs or an IP is invalid.
  void validate() const;
};

struct ResolverProfile {
  std::string provider_id;
  std::string display_name;
  Endpoint filtered_address;
  std::optional<Endpoint> control_address;
  Transport transport = Transport::UdpWithTcpFallback;
  std::vector<BlockSignature> blocked_signatures;
  int timeout_ms = 3000;
  int retries = 2;

  void validate() const;
};

// Cloudflare 1.1.1.2, Quad9 9.9.9.9 and Cisco OpenDNS 208.67.222.222 with
// their unfiltered siblings as control resolvers.
std::vector<ResolverProfile> default_profiles();

nlohmann::ordered_json to_json(const ResolverProfile& p);
ResolverProfile profile_from_json(const nlohmann::json& j);  // throws Error{Config}

enum class VerdictKind { Blocked, NotBlocked, Inconclusive };

const char* to_string(VerdictKind v);

struct Classification {
  VerdictKind verdict = VerdictKind::Inconclusive;
  std::string reason;                 // mandatory for Inconclusive
  std::optional<SignatureKind> signature;  // set iff Blocked

  friend bool operator==(const Classification&, const Classification&) = default;
};

// Total and deterministic. Blocked iff a signature matches and the control
// (when present) resolves normally; NotBlocked iff the filtered resolver
// returned a non-sinkhole answer; Inconclusive otherwise.
Classification classify(const DnsResponse& filtered, const std::optional<DnsResponse>& control,
                        const ResolverProfile& profile);

// Same rules, with transport failures mapped to Inconclusive("timeout", ...).
// A control outcome is only consulted when a signature matched.
Classification classify_outcome(const QueryOutcome& filtered, const std::optional<QueryOutcome>& control,
                                const ResolverProfile& profile);

// Whether classify() would consult a control response for this filtered one.
bool needs_control(const DnsResponse& filtered, const ResolverProfile& profile);

struct ResponseSummary {
  std::optional<int> rcode;
  std::vector<std::string> answers;  // "type rdata"
  bool truncated = false;
  std::uint32_t latency_ms = 0;
  std::string transport;
  std::optional<std::string> failure;
};

ResponseSummary summarize(const QueryOutcome& outcome);

struct ProviderVerdict {
  Domain domain;
  std::string provider_id;
  std::string qtype = "A";
  Classification classification;
  ResponseSummary filtered;
  std::optional<ResponseSummary> control;
  std::string queried_at;
};

nlohmann::ordered_json payload_json(const ProviderVerdict& v);
// Reads back the classification part of a stored dns payload. Throws Error{Schema}.
Classification classification_from_payload(const nlohmann::json& payload);

struct CampaignLimits {
  int max_inflight = 64;
  double qps_per_provider = 20.0;
  bool query_aaaa = false;
};

struct CampaignStats {
  std::size_t queried = 0;  // pairs resolved in this run
  std::size_t skipped = 0;  // pairs already stored
  std::map<std::string, std::size_t> blocked;
  std::map<std::string, std::size_t> inconclusive;
  bool interrupted = false;
};

// Resolves every (domain, profile) pair not yet stored under campaign_id and
// upserts one ProviderVerdict per pair. Repository write failures propagate;
// network failures become Inconclusive verdicts. When stop is set, workers
// finish their in-flight pair and return (clean checkpoint).
class CampaignRunner {
 public:
  CampaignRunner(Repository& repo, std::string campaign_id, Clock clock = system_clock())
      : repo_(repo), campaign_id_(std::move(campaign_id)), clock_(std::move(clock)) {}

  CampaignStats run(const std::vector<Domain>& domains, const std::vector<ResolverProfile>& profiles,
                    const CampaignLimits& limits, const std::atomic<bool>* stop = nullptr);

 private:
  Repository& repo_;
  std::string campaign_id_;
  Clock clock_;
};

// Per-provider Inconclusive counts are derived from the stored verdicts, so
// a resumed campaign reports the totals of the whole campaign.
nlohmann::ordered_json campaign_manifest(const Repository& repo, std::string_view campaign_id,
                                         const std::vector<ResolverProfile>& profiles, std::size_t domain_count,
                                         const std::string& started, const std::string& finished);

}  // namespace admal::dns
