#include "admal/mockdns.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>

#include "admal/error.hpp"
#include "admal/util.hpp"

namespace admal::mockdns {
namespace {

constexpr auto kTypeA = static_cast<std::uint16_t>(dns::QType::A);
constexpr auto kTypeAAAA = static_cast<std::uint16_t>(dns::QType::AAAA);
constexpr std::uint32_t kTtl = 300;

std::optional<dns::ResourceRecord> address_rr(const std::string& owner, std::uint16_t qtype, const std::string& ip) {
  auto bytes = dns::parse_ip(ip);
  if (!bytes) return std::nullopt;
  if (qtype == kTypeA && bytes->size() == 4) return dns::ResourceRecord{owner, kTypeA, 1, kTtl, *bytes};
  if (qtype == kTypeAAAA && bytes->size() == 16) return dns::ResourceRecord{owner, kTypeAAAA, 1, kTtl, *bytes};
  return std::nullopt;
}

}  // namespace

void MockProviderSpec::validate() const {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) fail(ErrorCode::Config, "drop_rate must be in [0,1] for " + id);
  if (!dns::parse_ip(default_answer)) fail(ErrorCode::Config, "invalid default_answer for " + id);
  if (block_behavior.kind == BlockBehavior::Kind::SinkholeA && !dns::parse_ip(block_behavior.sinkhole_ip)) {
    fail(ErrorCode::Config, "invalid sinkhole ip for " + id);
  }
}

FarmConfig parse_farm_config(std::string_view json_text, const std::string& base_dir) {
  FarmConfig cfg;
  try {
    const auto j = nlohmann::json::parse(json_text);
    cfg.seed = j.value("seed", std::uint64_t{0});
    for (const auto& pj : j.at("providers")) {
      MockProviderSpec s;
      s.id = pj.value("id", "provider" + std::to_string(cfg.providers.size()));
      s.listen = dns::Endpoint::parse(pj.value("listen", std::string("127.0.0.1:0")));
      if (pj.contains("blocklist")) {
        for (const auto& d : pj["blocklist"]) s.blocklist.insert(Domain::parse(d.get<std::string>()));
      }
      if (pj.contains("blocklist_file")) {
        std::filesystem::path p = pj["blocklist_file"].get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        for (auto& d : read_corpus(read_file(p))) s.blocklist.insert(std::move(d));
      }
      if (pj.contains("block_behavior")) {
        const auto& bj = pj["block_behavior"];
        const auto kind = bj.value("kind", std::string("SinkholeA"));
        if (kind == "SinkholeA") {
          s.block_behavior.kind = BlockBehavior::Kind::SinkholeA;
          s.block_behavior.sinkhole_ip = bj.value("ip", std::string("0.0.0.0"));
        } else if (kind == "Nxdomain") {
          s.block_behavior.kind = BlockBehavior::Kind::Nxdomain;
        } else {
          fail(ErrorCode::Config, "unknown block_behavior kind: " + kind);
        }
      }
      s.default_answer = pj.value("default_answer", s.default_answer);
      s.latency_ms = pj.value("latency_ms", 0u);
      s.drop_rate = pj.value("drop_rate", 0.0);
      s.validate();
      cfg.providers.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("farm config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, std::string("farm config: ") + e.what());
  }
  return cfg;
}

std::optional<std::vector<std::uint8_t>> answer(const MockProviderSpec& spec, std::span<const std::uint8_t> query) {
  dns::Message q;
  try {
    q = dns::parse_message(query);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (q.qr || q.questions.size() != 1) return std::nullopt;
  const auto& question = q.questions.front();

  dns::Message r;
  r.id = q.id;
  r.qr = true;
  r.opcode = q.opcode;
  r.rd = q.rd;
  r.ra = true;
  r.questions = q.questions;
  if (q.opcode != 0) {
    r.rcode = dns::kNotImp;
    return dns::encode_message(r);
  }
  std::optional<Domain> name;
  try {
    name = Domain::parse(question.name);
  } catch (const Error&) {
    r.rcode = dns::kRefused;
    return dns::encode_message(r);
  }
  r.rcode = dns::kNoError;
  if (spec.blocklist.count(*name)) {
    if (spec.block_behavior.kind == BlockBehavior::Kind::Nxdomain) {
      r.rcode = dns::kNxDomain;
    } else if (auto rr = address_rr(question.name, question.type, spec.block_behavior.sinkhole_ip)) {
      r.answers.push_back(std::move(*rr));
    } else if (question.type == kTypeAAAA) {
      r.answers.push_back(*address_rr(question.name, kTypeAAAA, "::"));
    }
  } else if (auto rr = address_rr(question.name, question.type, spec.default_answer)) {
    r.answers.push_back(std::move(*rr));
  }
  return dns::encode_message(r);
}

std::unique_ptr<Farm> Farm::serve(const FarmConfig& config, int threads_per_provider) {
  std::unique_ptr<Farm> farm(new Farm());
  farm->seed_ = config.seed;
  for (std::size_t i = 0; i < config.providers.size(); ++i) {
    const auto& spec = config.providers[i];
    spec.validate();
    auto p = std::make_unique<Provider>();
    p->spec = spec;
    p->rng.seed(config.seed ^ (0x9E3779B97F4A7C15ull * (i + 1)));

    sockaddr_storage ss{};
    socklen_t len = 0;
    int family = AF_INET;
    auto* v4 = reinterpret_cast<sockaddr_in*>(&ss);
    auto* v6 = reinterpret_cast<sockaddr_in6*>(&ss);
    if (inet_pton(AF_INET, spec.listen.ip.c_str(), &v4->sin_addr) == 1) {
      v4->sin_family = AF_INET;
      v4->sin_port = htons(spec.listen.port);
      len = sizeof(sockaddr_in);
    } else if (inet_pton(AF_INET6, spec.listen.ip.c_str(), &v6->sin6_addr) == 1) {
      family = AF_INET6;
      v6->sin6_family = AF_INET6;
      v6->sin6_port = htons(spec.listen.port);
      len = sizeof(sockaddr_in6);
    } else {
      fail(ErrorCode::Bind, "invalid listen address " + spec.listen.to_string());
    }
    p->fd = ::socket(family, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (p->fd < 0) fail(ErrorCode::Bind, std::string("socket: ") + std::strerror(errno));
    if (::bind(p->fd, reinterpret_cast<sockaddr*>(&ss), len) != 0) {
      const auto msg = std::string("bind ") + spec.listen.to_string() + ": " + std::strerror(errno);
      ::close(p->fd);
      p->fd = -1;
      fail(ErrorCode::Bind, msg);
    }
    sockaddr_storage bound{};
    socklen_t blen = sizeof(bound);
    ::getsockname(p->fd, reinterpret_cast<sockaddr*>(&bound), &blen);
    p->bound = spec.listen;
    p->bound.port = ntohs(family == AF_INET ? reinterpret_cast<sockaddr_in*>(&bound)->sin_port
                                            : reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port);
    farm->providers_.push_back(std::move(p));
  }
  for (auto& p : farm->providers_) {
    for (int t = 0; t < std::max(1, threads_per_provider); ++t) {
      farm->threads_.emplace_back([f = farm.get(), prov = p.get()] { f->serve_loop(*prov); });
    }
  }
  return farm;
}

void Farm::serve_loop(Provider& p) {
  std::vector<std::uint8_t> buf(65535);
  while (!stopped_.load()) {
    pollfd pfd{p.fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 50);
    if (rc <= 0) continue;
    sockaddr_storage from{};
    socklen_t flen = sizeof(from);
    const auto n = ::recvfrom(p.fd, buf.data(), buf.size(), MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &flen);
    if (n <= 0) continue;
    if (p.spec.drop_rate > 0.0) {
      double u;
      {
        std::lock_guard lock(p.rng_mu);
        u = std::uniform_real_distribution<double>(0.0, 1.0)(p.rng);
      }
      if (u < p.spec.drop_rate) {
        ++dropped_;
        continue;
      }
    }
    auto resp = answer(p.spec, std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
    if (!resp) continue;
    if (p.spec.latency_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(p.spec.latency_ms));
    ::sendto(p.fd, resp->data(), resp->size(), 0, reinterpret_cast<sockaddr*>(&from), flen);
    ++served_;
  }
}

void Farm::stop() {
  std::lock_guard lock(stop_mu_);
  if (stopped_.exchange(true)) return;
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
  for (auto& p : providers_) {
    if (p->fd >= 0) ::close(p->fd);
    p->fd = -1;
  }
}

Farm::~Farm() { stop(); }

dns::Endpoint Farm::endpoint(std::size_t i) const { return providers_.at(i)->bound; }

nlohmann::ordered_json Farm::manifest() const {
  nlohmann::ordered_json j;
  j["seed"] = seed_;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : providers_) {
    nlohmann::ordered_json pj;
    pj["id"] = p->spec.id;
    pj["listen"] = p->bound.to_string();
    pj["blocklist_size"] = p->spec.blocklist.size();
    pj["block_behavior"] = p->spec.block_behavior.kind == BlockBehavior::Kind::Nxdomain ? "Nxdomain" : "SinkholeA";
    pj["drop_rate"] = p->spec.drop_rate;
    pj["latency_ms"] = p->spec.latency_ms;
    arr.push_back(std::move(pj));
  }
  j["providers"] = std::move(arr);
  return j;
}

}  // namespace admal::mockdns
