#include "admal/dns_broker.hpp"

#include <algorithm>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

#include "admal/error.hpp"
#include "admal/rate_limit.hpp"

namespace admal::dns {
namespace {

using ojson = nlohmann::ordered_json;

constexpr auto kTypeA = static_cast<std::uint16_t>(QType::A);
constexpr auto kTypeAAAA = static_cast<std::uint16_t>(QType::AAAA);

bool answer_in(const DnsResponse& r, std::uint16_t type, const std::vector<std::string>& ips) {
  for (const auto& rr : r.answers()) {
    if (rr.type != type) continue;
    auto text = ip_text(rr.rdata);
    if (text && std::find(ips.begin(), ips.end(), *text) != ips.end()) return true;
  }
  return false;
}

std::optional<SignatureKind> match_signature(const DnsResponse& r, const ResolverProfile& p) {
  for (const auto& sig : p.blocked_signatures) {
    switch (sig.kind) {
      case SignatureKind::SinkholeA:
        if (r.rcode() == kNoError && answer_in(r, kTypeA, sig.sinkhole_ips)) return sig.kind;
        break;
      case SignatureKind::SinkholeAAAA:
        if (r.rcode() == kNoError && answer_in(r, kTypeAAAA, sig.sinkhole_ips)) return sig.kind;
        break;
      case SignatureKind::Nxdomain:
        if (r.rcode() == kNxDomain) return sig.kind;
        break;
      case SignatureKind::Refused:
        if (r.rcode() == kRefused) return sig.kind;
        break;
      case SignatureKind::ZeroAnswerNoError:
        if (r.rcode() == kNoError && r.answers().empty() && !r.truncated()) return sig.kind;
        break;
    }
  }
  return std::nullopt;
}

bool is_sinkhole_answer(const DnsResponse& r, const ResolverProfile& p) {
  for (const auto& sig : p.blocked_signatures) {
    if (sig.kind == SignatureKind::SinkholeA && answer_in(r, kTypeA, sig.sinkhole_ips)) return true;
    if (sig.kind == SignatureKind::SinkholeAAAA && answer_in(r, kTypeAAAA, sig.sinkhole_ips)) return true;
  }
  return false;
}

std::string rcode_reason(int rcode) {
  switch (rcode) {
    case kFormErr: return "formerr";
    case kServFail: return "servfail";
    case kNxDomain: return "nxdomain";
    case kNotImp: return "notimp";
    case kRefused: return "refused";
    default: return "rcode-" + std::to_string(rcode);
  }
}

Classification inconclusive(std::string reason) {
  return {VerdictKind::Inconclusive, std::move(reason), std::nullopt};
}

std::string qtype_name(std::uint16_t t) {
  switch (t) {
    case kTypeA: return "A";
    case kTypeAAAA: return "AAAA";
    case static_cast<std::uint16_t>(QType::CNAME): return "CNAME";
    case static_cast<std::uint16_t>(QType::NS): return "NS";
    case static_cast<std::uint16_t>(QType::SOA): return "SOA";
    default: return "TYPE" + std::to_string(t);
  }
}

ojson summary_json(const ResponseSummary& s) {
  ojson j;
  j["rcode"] = s.rcode ? ojson(*s.rcode) : ojson(nullptr);
  j["answers"] = s.answers;
  j["truncated"] = s.truncated;
  j["latency_ms"] = s.latency_ms;
  j["transport"] = s.transport;
  j["failure"] = s.failure ? ojson(*s.failure) : ojson(nullptr);
  return j;
}

Transport parse_transport(const std::string& s) {
  if (s == "udp-with-tcp-fallback" || s == "udp") return Transport::UdpWithTcpFallback;
  if (s == "tcp") return Transport::Tcp;
  fail(ErrorCode::Config, "unknown transport: " + s);
}

}  // namespace

const char* to_string(SignatureKind kind) {
  switch (kind) {
    case SignatureKind::SinkholeA: return "SinkholeA";
    case SignatureKind::SinkholeAAAA: return "SinkholeAAAA";
    case SignatureKind::Nxdomain: return "Nxdomain";
    case SignatureKind::Refused: return "Refused";
    case SignatureKind::ZeroAnswerNoError: return "ZeroAnswerNoError";
  }
  return "Nxdomain";
}

std::optional<SignatureKind> parse_signature_kind(std::string_view s) {
  for (auto k : {SignatureKind::SinkholeA, SignatureKind::SinkholeAAAA, SignatureKind::Nxdomain,
                 SignatureKind::Refused, SignatureKind::ZeroAnswerNoError}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

const char* to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::Blocked: return "Blocked";
    case VerdictKind::NotBlocked: return "NotBlocked";
    case VerdictKind::Inconclusive: return "Inconclusive";
  }
  return "Inconclusive";
}

void BlockSignature::validate() const {
  const bool sinkhole = kind == SignatureKind::SinkholeA || kind == SignatureKind::SinkholeAAAA;
  if (sinkhole && sinkhole_ips.empty()) {
    fail(ErrorCode::Config, std::string(to_string(kind)) + " signature needs at least one sinkhole IP");
  }
  for (const auto& ip : sinkhole_ips) {
    auto canon = canonical_ip(ip);
    if (!canon || *canon != ip) fail(ErrorCode::Config, "sinkhole IP not canonical: " + ip);
  }
}

void ResolverProfile::validate() const {
  if (provider_id.empty()) fail(ErrorCode::Config, "provider_id must not be empty");
  if (timeout_ms <= 0) fail(ErrorCode::Config, "timeout_ms must be > 0 for " + provider_id);
  if (retries < 0) fail(ErrorCode::Config, "retries must be >= 0 for " + provider_id);
  for (const auto& s : blocked_signatures) s.validate();
}

std::vector<ResolverProfile> default_profiles() {
  std::vector<ResolverProfile> out;
  {
    ResolverProfile p;
    p.provider_id = "cloudflare";
    p.display_name = "Cloudflare";
    p.filtered_address = Endpoint::parse("1.1.1.2:53");
    p.control_address = Endpoint::parse("1.1.1.1:53");
    p.blocked_signatures = {{SignatureKind::SinkholeA, {"0.0.0.0"}}, {SignatureKind::SinkholeAAAA, {"::"}}};
    out.push_back(std::move(p));
  }
  {
    ResolverProfile p;
    p.provider_id = "quad9";
    p.display_name = "Quad9";
    p.filtered_address = Endpoint::parse("9.9.9.9:53");
    p.control_address = Endpoint::parse("9.9.9.10:53");
    p.blocked_signatures = {{SignatureKind::Nxdomain, {}}};
    out.push_back(std::move(p));
  }
  {
    ResolverProfile p;
    p.provider_id = "cisco";
    p.display_name = "Cisco OpenDNS";
    p.filtered_address = Endpoint::parse("208.67.222.222:53");
    p.control_address = Endpoint::parse("1.1.1.1:53");
    // OpenDNS block-page addresses.
    p.blocked_signatures = {{SignatureKind::SinkholeA,
                             {"146.112.61.104", "146.112.61.105", "146.112.61.106", "146.112.61.107",
                              "146.112.61.108", "146.112.61.110"}}};
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::ordered_json to_json(const ResolverProfile& p) {
  ojson j;
  j["provider_id"] = p.provider_id;
  j["display_name"] = p.display_name;
  j["filtered_address"] = p.filtered_address.to_string();
  j["control_address"] = p.control_address ? ojson(p.control_address->to_string()) : ojson(nullptr);
  j["transport"] = p.transport == Transport::Tcp ? "tcp" : "udp-with-tcp-fallback";
  ojson sigs = ojson::array();
  for (const auto& s : p.blocked_signatures) {
    ojson sj;
    sj["kind"] = to_string(s.kind);
    sj["sinkhole_ips"] = s.sinkhole_ips;
    sigs.push_back(std::move(sj));
  }
  j["blocked_signatures"] = std::move(sigs);
  j["timeout_ms"] = p.timeout_ms;
  j["retries"] = p.retries;
  return j;
}

ResolverProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Config, "resolver profile must be an object");
  ResolverProfile p;
  try {
    p.provider_id = j.at("provider_id").get<std::string>();
    p.display_name = j.value("display_name", p.provider_id);
    p.filtered_address = Endpoint::parse(j.at("filtered_address").get<std::string>());
    if (j.contains("control_address") && !j["control_address"].is_null()) {
      p.control_address = Endpoint::parse(j["control_address"].get<std::string>());
    }
    p.transport = parse_transport(j.value("transport", std::string("udp-with-tcp-fallback")));
    for (const auto& sj : j.value("blocked_signatures", nlohmann::json::array())) {
      BlockSignature s;
      const auto kind = sj.at("kind").get<std::string>();
      auto k = parse_signature_kind(kind);
      if (!k) fail(ErrorCode::Config, "unknown signature kind: " + kind);
      s.kind = *k;
      for (const auto& ip : sj.value("sinkhole_ips", nlohmann::json::array())) {
        auto canon = canonical_ip(ip.get<std::string>());
        if (!canon) fail(ErrorCode::Config, "invalid sinkhole IP: " + ip.get<std::string>());
        s.sinkhole_ips.push_back(*canon);
      }
      p.blocked_signatures.push_back(std::move(s));
    }
    p.timeout_ms = j.value("timeout_ms", 3000);
    p.retries = j.value("retries", 2);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("resolver profile: ") + e.what());
  }
  p.validate();
  return p;
}

bool needs_control(const DnsResponse& filtered, const ResolverProfile& profile) {
  return profile.control_address.has_value() && match_signature(filtered, profile).has_value();
}

Classification classify(const DnsResponse& filtered, const std::optional<DnsResponse>& control,
                        const ResolverProfile& profile) {
  if (auto sig = match_signature(filtered, profile)) {
    if (!control) return {VerdictKind::Blocked, {}, sig};
    const auto& c = *control;
    if (c.rcode() == kNoError && !c.answers().empty()) {
      if (is_sinkhole_answer(c, profile)) return inconclusive("sinkhole-on-control");
      return {VerdictKind::Blocked, {}, sig};
    }
    if (c.rcode() == kNoError) return inconclusive(c.truncated() ? "truncated-on-control" : "nodata-on-control");
    return inconclusive(rcode_reason(c.rcode()) + "-on-control");
  }
  if (filtered.rcode() == kNoError) {
    if (!filtered.answers().empty()) return {VerdictKind::NotBlocked, {}, std::nullopt};
    return inconclusive(filtered.truncated() ? "truncated" : "nodata");
  }
  return inconclusive(rcode_reason(filtered.rcode()));
}

Classification classify_outcome(const QueryOutcome& filtered, const std::optional<QueryOutcome>& control,
                                const ResolverProfile& profile) {
  if (!filtered.ok()) return inconclusive(to_string(filtered.failure()));
  if (!needs_control(filtered.response(), profile) || !control) {
    return classify(filtered.response(), std::nullopt, profile);
  }
  if (!control->ok()) return inconclusive(std::string("control-") + to_string(control->failure()));
  return classify(filtered.response(), control->response(), profile);
}

ResponseSummary summarize(const QueryOutcome& outcome) {
  ResponseSummary s;
  s.transport = outcome.transport_used;
  if (!outcome.ok()) {
    s.failure = to_string(outcome.failure());
    return s;
  }
  const auto& r = outcome.response();
  s.rcode = r.rcode();
  s.truncated = r.truncated();
  s.latency_ms = r.latency_ms;
  for (const auto& rr : r.answers()) s.answers.push_back(qtype_name(rr.type) + " " + rr.rdata_text());
  return s;
}

nlohmann::ordered_json payload_json(const ProviderVerdict& v) {
  ojson j;
  j["verdict"] = to_string(v.classification.verdict);
  j["reason"] = v.classification.reason.empty() ? ojson(nullptr) : ojson(v.classification.reason);
  j["signature"] = v.classification.signature ? ojson(to_string(*v.classification.signature)) : ojson(nullptr);
  j["qtype"] = v.qtype;
  j["filtered"] = summary_json(v.filtered);
  j["control"] = v.control ? summary_json(*v.control) : ojson(nullptr);
  j["queried_at"] = v.queried_at;
  return j;
}

Classification classification_from_payload(const nlohmann::json& payload) {
  Classification c;
  try {
    const auto verdict = payload.at("verdict").get<std::string>();
    if (verdict == "Blocked") {
      c.verdict = VerdictKind::Blocked;
    } else if (verdict == "NotBlocked") {
      c.verdict = VerdictKind::NotBlocked;
    } else if (verdict == "Inconclusive") {
      c.verdict = VerdictKind::Inconclusive;
    } else {
      fail(ErrorCode::Schema, "unknown verdict: " + verdict);
    }
    if (auto r = payload.find("reason"); r != payload.end() && r->is_string()) c.reason = r->get<std::string>();
    if (auto s = payload.find("signature"); s != payload.end() && s->is_string()) {
      c.signature = parse_signature_kind(s->get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Schema, std::string("dns payload: ") + e.what());
  }
  if (c.verdict == VerdictKind::Blocked && !c.signature) fail(ErrorCode::Schema, "Blocked verdict without signature");
  return c;
}

namespace {

struct PairResult {
  Classification classification;
  QueryOutcome filtered;
  std::optional<QueryOutcome> control;
};

QueryOutcome paced_resolve(const Endpoint& ep, const Domain& d, QType qtype, const ResolverProfile& p,
                           TokenBucket& bucket) {
  QueryOptions opts;
  opts.transport = p.transport;
  opts.timeout = std::chrono::milliseconds(p.timeout_ms);
  opts.retries = 0;
  QueryOutcome out;
  for (int attempt = 0; attempt <= p.retries; ++attempt) {
    bucket.acquire();
    out = resolve(ep, d, qtype, opts);
    out.attempts = attempt + 1;
    if (out.ok() || out.failure() != QueryFailure::Timeout) break;
  }
  return out;
}

PairResult resolve_pair(const Domain& d, QType qtype, const ResolverProfile& p, TokenBucket& bucket) {
  PairResult r;
  r.filtered = paced_resolve(p.filtered_address, d, qtype, p, bucket);
  if (r.filtered.ok() && needs_control(r.filtered.response(), p)) {
    r.control = paced_resolve(*p.control_address, d, qtype, p, bucket);
  }
  r.classification = classify_outcome(r.filtered, r.control, p);
  return r;
}

}  // namespace

CampaignStats CampaignRunner::run(const std::vector<Domain>& domains, const std::vector<ResolverProfile>& profiles,
                                  const CampaignLimits& limits, const std::atomic<bool>* stop) {
  if (profiles.empty()) fail(ErrorCode::InvalidArgument, "campaign needs at least one resolver profile");
  if (limits.max_inflight < 1) fail(ErrorCode::InvalidArgument, "max_inflight must be >= 1");
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    profiles[i].validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (profiles[i].provider_id == profiles[j].provider_id) {
        fail(ErrorCode::Config, "duplicate provider_id: " + profiles[i].provider_id);
      }
    }
  }

  CampaignStats stats;
  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    for (std::size_t p = 0; p < profiles.size(); ++p) {
      if (repo_.contains(campaign_id_, profiles[p].provider_id, domains[d])) {
        ++stats.skipped;
      } else {
        tasks.emplace_back(d, p);
      }
    }
  }

  std::vector<std::unique_ptr<TokenBucket>> buckets;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    buckets.push_back(std::make_unique<TokenBucket>(limits.qps_per_provider));
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    while (!abort.load() && !(stop && stop->load())) {
      const auto i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto& [di, pi] = tasks[i];
      const auto& domain = domains[di];
      const auto& profile = profiles[pi];
      try {
        auto r = resolve_pair(domain, QType::A, profile, *buckets[pi]);
        std::string qtype = "A";
        if (limits.query_aaaa) {
          auto r6 = resolve_pair(domain, QType::AAAA, profile, *buckets[pi]);
          qtype = "A+AAAA";
          const auto v4 = r.classification.verdict;
          const auto v6 = r6.classification.verdict;
          // A block on either family wins; otherwise any positive resolution does.
          if (v6 == VerdictKind::Blocked && v4 != VerdictKind::Blocked) r = std::move(r6);
          else if (v4 == VerdictKind::Inconclusive && v6 == VerdictKind::NotBlocked) r = std::move(r6);
        }
        ProviderVerdict v{domain, profile.provider_id, qtype, r.classification, summarize(r.filtered),
                          r.control ? std::optional(summarize(*r.control)) : std::nullopt,
                          format_rfc3339(clock_())};
        VerdictRecord rec{domain, profile.provider_id, campaign_id_, RecordKind::Dns, payload_json(v).dump(),
                          v.queried_at};
        repo_.upsert(rec);
        std::lock_guard lock(mu);
        ++stats.queried;
        if (r.classification.verdict == VerdictKind::Blocked) ++stats.blocked[profile.provider_id];
        if (r.classification.verdict == VerdictKind::Inconclusive) ++stats.inconclusive[profile.provider_id];
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
        abort = true;
      }
    }
  };

  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(limits.max_inflight), tasks.size());
  {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  stats.interrupted = next.load() < tasks.size();
  return stats;
}

nlohmann::ordered_json campaign_manifest(const Repository& repo, std::string_view campaign_id,
                                         const std::vector<ResolverProfile>& profiles, std::size_t domain_count,
                                         const std::string& started, const std::string& finished) {
  ojson j;
  j["campaign"] = std::string(campaign_id);
  j["started"] = started;
  j["finished"] = finished;
  ojson ids = ojson::array();
  ojson inconclusive = ojson::object();
  ojson verdicts = ojson::object();
  for (const auto& p : profiles) {
    ids.push_back(p.provider_id);
    std::size_t inc = 0;
    const auto records = repo.query(campaign_id, p.provider_id, RecordKind::Dns);
    for (const auto& rec : records) {
      if (classification_from_payload(nlohmann::json::parse(rec.payload)).verdict == VerdictKind::Inconclusive) {
        ++inc;
      }
    }
    inconclusive[p.provider_id] = inc;
    verdicts[p.provider_id] = records.size();
  }
  j["providers"] = std::move(ids);
  j["domains"] = domain_count;
  j["inconclusive"] = std::move(inconclusive);
  j["verdicts"] = std::move(verdicts);
  return j;
}

}  // namespace admal::dns
