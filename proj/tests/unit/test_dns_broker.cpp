#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>
#include <set>
#include <thread>

#include "admal/dns_broker.hpp"
#include "admal/error.hpp"
#include "admal/mockdns.hpp"
#include "support.hpp"

using namespace admal;
using namespace admal::dns;

namespace {

ResourceRecord a_rr(const std::string& ip) {
  auto bytes = *parse_ip(ip);
  return {"x.test", static_cast<std::uint16_t>(bytes.size() == 4 ? 1 : 28), 1, 60, bytes};
}

DnsResponse resp(int rcode, std::vector<std::string> ips = {}, bool tc = false) {
  DnsResponse r;
  r.msg.qr = true;
  r.msg.rcode = rcode;
  r.msg.tc = tc;
  for (auto& ip : ips) r.msg.answers.push_back(a_rr(ip));
  return r;
}

ResolverProfile profile(std::vector<BlockSignature> sigs, bool with_control = true) {
  ResolverProfile p;
  p.provider_id = "p";
  p.filtered_address = Endpoint::parse("127.0.0.1:53");
  if (with_control) p.control_address = Endpoint::parse("127.0.0.1:54");
  p.blocked_signatures = std::move(sigs);
  return p;
}

ResolverProfile sinkhole_profile() { return profile({{SignatureKind::SinkholeA, {"0.0.0.0"}}}); }

Clock fixed_clock() {
  return [] { return TimePoint{std::chrono::milliseconds(1702771200000)}; };
}

}  // namespace

TEST(Classify, SinkholeWithHealthyControlIsBlocked) {
  auto c = classify(resp(0, {"0.0.0.0"}), resp(0, {"93.184.216.34"}), sinkhole_profile());
  EXPECT_EQ(c.verdict, VerdictKind::Blocked);
  EXPECT_EQ(c.signature, SignatureKind::SinkholeA);
  EXPECT_TRUE(c.reason.empty());
}

TEST(Classify, NxdomainEverywhereIsInconclusive) {
  auto p = profile({{SignatureKind::Nxdomain, {}}});
  auto c = classify(resp(3), resp(3), p);
  EXPECT_EQ(c.verdict, VerdictKind::Inconclusive);
  EXPECT_EQ(c.reason, "nxdomain-on-control");
  EXPECT_FALSE(c.signature);
}

TEST(Classify, RealAnswerIsNotBlocked) {
  auto c = classify(resp(0, {"93.184.216.34"}), std::nullopt, sinkhole_profile());
  EXPECT_EQ(c.verdict, VerdictKind::NotBlocked);
  EXPECT_FALSE(needs_control(resp(0, {"93.184.216.34"}), sinkhole_profile()));
}

TEST(Classify, ServfailAndNodataAreInconclusive) {
  auto p = sinkhole_profile();
  EXPECT_EQ(classify(resp(2), std::nullopt, p).reason, "servfail");
  EXPECT_EQ(classify(resp(0), std::nullopt, p).reason, "nodata");
  EXPECT_EQ(classify(resp(0, {}, true), std::nullopt, p).reason, "truncated");
  EXPECT_EQ(classify(resp(9), std::nullopt, p).reason, "rcode-9");
}

TEST(Classify, ControlAlsoSinkholedIsInconclusive) {
  auto c = classify(resp(0, {"0.0.0.0"}), resp(0, {"0.0.0.0"}), sinkhole_profile());
  EXPECT_EQ(c.verdict, VerdictKind::Inconclusive);
  EXPECT_EQ(c.reason, "sinkhole-on-control");
  EXPECT_EQ(classify(resp(0, {"0.0.0.0"}), resp(0), sinkhole_profile()).reason, "nodata-on-control");
}

TEST(Classify, NoControlConfiguredTrustsSignature) {
  auto p = profile({{SignatureKind::Nxdomain, {}}}, false);
  EXPECT_EQ(classify(resp(3), std::nullopt, p).verdict, VerdictKind::Blocked);
  EXPECT_FALSE(needs_control(resp(3), p));
}

TEST(Classify, OtherSignatureKinds) {
  auto p = profile({{SignatureKind::Refused, {}}, {SignatureKind::ZeroAnswerNoError, {}},
                    {SignatureKind::SinkholeAAAA, {"::"}}},
                   false);
  EXPECT_EQ(classify(resp(5), std::nullopt, p).signature, SignatureKind::Refused);
  EXPECT_EQ(classify(resp(0), std::nullopt, p).signature, SignatureKind::ZeroAnswerNoError);
  EXPECT_EQ(classify(resp(0, {"::"}), std::nullopt, p).signature, SignatureKind::SinkholeAAAA);
  // A truncated empty answer is not a ZeroAnswerNoError block.
  EXPECT_EQ(classify(resp(0, {}, true), std::nullopt, p).verdict, VerdictKind::Inconclusive);
}

TEST(Classify, TransportFailures) {
  auto p = sinkhole_profile();
  QueryOutcome timeout{QueryFailure::Timeout, "udp", 3};
  QueryOutcome sink{resp(0, {"0.0.0.0"}), "udp", 1};
  QueryOutcome healthy{resp(0, {"1.2.3.4"}), "udp", 1};
  EXPECT_EQ(classify_outcome(timeout, std::nullopt, p).reason, "timeout");
  EXPECT_EQ(classify_outcome(sink, timeout, p).reason, "control-timeout");
  EXPECT_EQ(classify_outcome(sink, healthy, p).verdict, VerdictKind::Blocked);
  EXPECT_EQ(classify_outcome(QueryOutcome{QueryFailure::Malformed, "udp", 1}, std::nullopt, p).reason,
            "malformed-response");
  // The control is not consulted when nothing matched.
  EXPECT_EQ(classify_outcome(healthy, timeout, p).verdict, VerdictKind::NotBlocked);
}

// Random responses and profiles: the verdict is always defined, repeatable,
// and carries a reason exactly when Inconclusive and a signature exactly when Blocked.
TEST(Classify, TotalAndDeterministic) {
  std::mt19937_64 rng(7);
  const std::vector<std::string> ips{"0.0.0.0", "1.2.3.4", "146.112.61.104", "::", "2001:db8::1"};
  auto random_resp = [&] {
    std::vector<std::string> a;
    const int n = static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) a.push_back(ips[rng() % ips.size()]);
    static const int rcodes[] = {0, 0, 0, 2, 3, 5, 4};
    return resp(rcodes[rng() % 7], a, rng() % 10 == 0);
  };
  const std::vector<ResolverProfile> profiles = {
      sinkhole_profile(), profile({{SignatureKind::Nxdomain, {}}}),
      profile({{SignatureKind::SinkholeA, {"146.112.61.104"}}}, false),
      profile({{SignatureKind::Refused, {}}, {SignatureKind::ZeroAnswerNoError, {}}})};
  for (int i = 0; i < 20000; ++i) {
    const auto& p = profiles[rng() % profiles.size()];
    auto f = random_resp();
    std::optional<DnsResponse> c;
    if (rng() % 2) c = random_resp();
    auto v1 = classify(f, c, p);
    auto v2 = classify(f, c, p);
    EXPECT_EQ(v1, v2);
    EXPECT_EQ(v1.verdict == VerdictKind::Inconclusive, !v1.reason.empty());
    EXPECT_EQ(v1.verdict == VerdictKind::Blocked, v1.signature.has_value());
  }
}

TEST(Profile, JsonRoundTrip) {
  for (const auto& p : default_profiles()) {
    auto back = profile_from_json(nlohmann::json::parse(to_json(p).dump()));
    EXPECT_EQ(back.provider_id, p.provider_id);
    EXPECT_EQ(back.filtered_address, p.filtered_address);
    EXPECT_EQ(back.control_address, p.control_address);
    ASSERT_EQ(back.blocked_signatures.size(), p.blocked_signatures.size());
    for (std::size_t i = 0; i < p.blocked_signatures.size(); ++i) {
      EXPECT_EQ(back.blocked_signatures[i].kind, p.blocked_signatures[i].kind);
      EXPECT_EQ(back.blocked_signatures[i].sinkhole_ips, p.blocked_signatures[i].sinkhole_ips);
    }
  }
}

TEST(Profile, Rejections) {
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(
                   R"({"provider_id":"x","filtered_address":"1.1.1.1","blocked_signatures":[{"kind":"SinkholeA"}]})")),
               Error);
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(
                   R"({"provider_id":"x","filtered_address":"1.1.1.1","blocked_signatures":[{"kind":"Bogus"}]})")),
               Error);
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(R"({"provider_id":"","filtered_address":"1.1.1.1"})")),
               Error);
  EXPECT_THROW(Endpoint::parse("1.1.1.1:70000"), Error);
  EXPECT_EQ(Endpoint::parse("[::1]:5353").port, 5353);
}

TEST(Payload, RoundTripsClassification) {
  ProviderVerdict v{Domain::parse("x.test")};
  v.provider_id = "p";
  v.classification = {VerdictKind::Blocked, "", SignatureKind::Nxdomain};
  v.queried_at = "2023-12-17T00:00:00.000Z";
  auto j = nlohmann::json::parse(payload_json(v).dump());
  EXPECT_EQ(classification_from_payload(j), v.classification);
  j["verdict"] = "Maybe";
  EXPECT_THROW(classification_from_payload(j), Error);
}

namespace {

struct Rig {
  std::unique_ptr<mockdns::Farm> farm;
  std::vector<ResolverProfile> profiles;
};

// Three filtering providers plus an unfiltered control server.
Rig make_rig(const std::vector<std::set<std::string>>& blocklists, double drop_rate = 0.0) {
  mockdns::FarmConfig cfg;
  for (std::size_t i = 0; i <= blocklists.size(); ++i) {
    mockdns::MockProviderSpec s;
    s.id = i < blocklists.size() ? "p" + std::to_string(i + 1) : "control";
    s.listen = Endpoint::parse("127.0.0.1:0");
    if (i < blocklists.size()) {
      for (const auto& d : blocklists[i]) s.blocklist.insert(Domain::parse(d));
      s.drop_rate = drop_rate;
    }
    if (i == 2) s.block_behavior.kind = mockdns::BlockBehavior::Kind::Nxdomain;
    cfg.providers.push_back(std::move(s));
  }
  Rig rig;
  rig.farm = mockdns::Farm::serve(cfg);
  for (std::size_t i = 0; i < blocklists.size(); ++i) {
    ResolverProfile p = i == 2 ? profile({{SignatureKind::Nxdomain, {}}}) : sinkhole_profile();
    p.provider_id = "p" + std::to_string(i + 1);
    p.filtered_address = rig.farm->endpoint(i);
    p.control_address = rig.farm->endpoint(blocklists.size());
    p.timeout_ms = 300;
    p.retries = 1;
    rig.profiles.push_back(std::move(p));
  }
  return rig;
}

std::vector<Domain> ten_domains() {
  std::vector<Domain> out;
  for (int i = 1; i <= 10; ++i) out.push_back(Domain::parse("d" + std::to_string(i) + ".test"));
  return out;
}

}  // namespace

TEST(Campaign, TenDomainsThreeProvidersThirtyVerdicts) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  auto rig = make_rig({{"d1.test", "d2.test"}, {}, {"d3.test"}});
  CampaignRunner runner(repo, "c1", fixed_clock());
  auto stats = runner.run(ten_domains(), rig.profiles, {8, 1000.0, false});
  EXPECT_EQ(stats.queried, 30u);
  EXPECT_EQ(stats.skipped, 0u);
  EXPECT_FALSE(stats.interrupted);
  EXPECT_EQ(repo.query("c1", std::nullopt, RecordKind::Dns).size(), 30u);

  std::map<std::string, std::set<std::string>> blocked;
  for (const auto& rec : repo.query("c1")) {
    auto c = classification_from_payload(nlohmann::json::parse(rec.payload));
    if (c.verdict == VerdictKind::Blocked) blocked[rec.provider].insert(rec.domain.str());
    else EXPECT_EQ(c.verdict, VerdictKind::NotBlocked) << rec.domain.str() << " " << c.reason;
    EXPECT_EQ(rec.ts, "2023-12-17T00:00:00.000Z");
  }
  EXPECT_EQ(blocked["p1"], (std::set<std::string>{"d1.test", "d2.test"}));
  EXPECT_TRUE(blocked["p2"].empty());
  EXPECT_EQ(blocked["p3"], (std::set<std::string>{"d3.test"}));

  // Resume: everything is already stored.
  auto again = runner.run(ten_domains(), rig.profiles, {8, 1000.0, false});
  EXPECT_EQ(again.queried, 0u);
  EXPECT_EQ(again.skipped, 30u);

  auto m = campaign_manifest(repo, "c1", rig.profiles, 10, "s", "f");
  EXPECT_EQ(m["domains"], 10);
}

TEST(Campaign, PreStoppedRunDoesNothing) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  auto rig = make_rig({{}, {}, {}});
  std::atomic<bool> stop{true};
  auto stats = CampaignRunner(repo, "c1").run(ten_domains(), rig.profiles, {4, 1000.0, false}, &stop);
  EXPECT_TRUE(stats.interrupted);
  EXPECT_EQ(stats.queried, 0u);
  EXPECT_EQ(repo.size(), 0u);
}

TEST(Campaign, DroppingProviderYieldsTimeout) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  auto rig = make_rig({{}, {}, {}}, 1.0);
  std::vector<Domain> two{Domain::parse("a.test"), Domain::parse("b.test")};
  auto stats = CampaignRunner(repo, "c1").run(two, {rig.profiles[0]}, {4, 1000.0, false});
  EXPECT_EQ(stats.queried, 2u);
  EXPECT_EQ(stats.inconclusive["p1"], 2u);
  for (const auto& rec : repo.query("c1")) {
    auto c = classification_from_payload(nlohmann::json::parse(rec.payload));
    EXPECT_EQ(c.verdict, VerdictKind::Inconclusive);
    EXPECT_EQ(c.reason, "timeout");
  }
}

namespace {

// Minimal server: every UDP reply sets TC; the TCP listener on the same port
// returns the full answer.
class TruncatingServer {
 public:
  TruncatingServer() {
    udp_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    tcp_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    for (int attempt = 0; attempt < 50; ++attempt) {
      a.sin_port = 0;
      if (::bind(tcp_, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) continue;
      socklen_t len = sizeof a;
      ::getsockname(tcp_, reinterpret_cast<sockaddr*>(&a), &len);
      if (::bind(udp_, reinterpret_cast<sockaddr*>(&a), sizeof a) == 0) break;
      ::close(tcp_);
      tcp_ = ::socket(AF_INET, SOCK_STREAM, 0);
    }
    port_ = ntohs(a.sin_port);
    ::listen(tcp_, 4);
    udp_thread_ = std::thread([this] { serve_udp(); });
    tcp_thread_ = std::thread([this] { serve_tcp(); });
  }
  ~TruncatingServer() {
    ::shutdown(udp_, SHUT_RDWR);
    ::shutdown(tcp_, SHUT_RDWR);
    ::close(udp_);
    ::close(tcp_);
    udp_thread_.join();
    tcp_thread_.join();
  }
  std::uint16_t port() const { return port_; }

 private:
  static std::vector<std::uint8_t> reply(const std::uint8_t* q, std::size_t n, bool truncated) {
    auto m = parse_message(std::span<const std::uint8_t>(q, n));
    m.qr = true;
    m.tc = truncated;
    m.additional.clear();
    if (!truncated) m.answers.push_back({m.questions.at(0).name, 1, 1, 60, {10, 9, 8, 7}});
    return encode_message(m);
  }
  void serve_udp() {
    std::uint8_t buf[1500];
    for (;;) {
      sockaddr_in from{};
      socklen_t fl = sizeof from;
      auto n = ::recvfrom(udp_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &fl);
      if (n <= 0) return;
      auto out = reply(buf, static_cast<std::size_t>(n), true);
      ::sendto(udp_, out.data(), out.size(), 0, reinterpret_cast<sockaddr*>(&from), fl);
    }
  }
  void serve_tcp() {
    for (;;) {
      int c = ::accept(tcp_, nullptr, nullptr);
      if (c < 0) return;
      std::uint8_t len[2];
      if (::recv(c, len, 2, MSG_WAITALL) == 2) {
        std::vector<std::uint8_t> buf((len[0] << 8) | len[1]);
        if (::recv(c, buf.data(), buf.size(), MSG_WAITALL) == static_cast<ssize_t>(buf.size())) {
          auto out = reply(buf.data(), buf.size(), false);
          std::uint8_t hdr[2] = {static_cast<std::uint8_t>(out.size() >> 8), static_cast<std::uint8_t>(out.size())};
          ::send(c, hdr, 2, 0);
          ::send(c, out.data(), out.size(), 0);
        }
      }
      ::close(c);
    }
  }

  int udp_ = -1, tcp_ = -1;
  std::uint16_t port_ = 0;
  std::thread udp_thread_, tcp_thread_;
};

}  // namespace

TEST(Transport, FallsBackToTcpOnTruncation) {
  TruncatingServer server;
  QueryOptions o;
  o.timeout = std::chrono::milliseconds(1000);
  o.retries = 0;
  auto r = resolve(Endpoint{"127.0.0.1", server.port()}, Domain::parse("big.test"), QType::A, o);
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.transport_used, "tcp");
  EXPECT_FALSE(r.response().truncated());
  ASSERT_EQ(r.response().answers().size(), 1u);
  EXPECT_EQ(r.response().answers()[0].rdata_text(), "10.9.8.7");

  o.transport = Transport::Tcp;
  auto t = resolve(Endpoint{"127.0.0.1", server.port()}, Domain::parse("big.test"), QType::A, o);
  ASSERT_TRUE(t.ok());
  EXPECT_EQ(t.transport_used, "tcp");
}

TEST(Transport, ClosedPortFailsWithoutHanging) {
  QueryOptions o;
  o.timeout = std::chrono::milliseconds(200);
  o.retries = 1;
  auto start = std::chrono::steady_clock::now();
  auto r = resolve(Endpoint{"127.0.0.1", 9}, Domain::parse("x.test"), QType::A, o);
  EXPECT_FALSE(r.ok());
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(3));
}
