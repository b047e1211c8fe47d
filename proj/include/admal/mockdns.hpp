#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "admal/dns_transport.hpp"
#include "admal/dns_wire.hpp"
#include "admal/domain.hpp"
#include "json.hpp"

namespace admal::mockdns {

struct BlockBehavior {
  enum class Kind { SinkholeA, Nxdomain } kind = Kind::SinkholeA;
  std::string sinkhole_ip = "0.0.0.0";
};

struct MockProviderSpec {
  std::string id;
  dns::Endpoint listen;  // port 0 picks an ephemeral port
  DomainSet blocklist;
  BlockBehavior block_behavior;
  std::string default_answer = "203.0.113.9";
  std::uint32_t latency_ms = 0;
  double drop_rate = 0.0;

  void validate() const;  // throws Error{Config}
};

struct FarmConfig {
  std::vector<MockProviderSpec> providers;
  std::uint64_t seed = 0;
};

// {"providers":[{"id","listen","blocklist":[…]|"blocklist_file","block_behavior":{"kind","ip"},
//   "default_answer","latency_ms","drop_rate"}…],"seed":n}. Relative blocklist
// files resolve against base_dir. Throws Error{Config}.
FarmConfig parse_farm_config(std::string_view json_text, const std::string& base_dir = ".");

// Pure response function: identical query bytes give identical answers.
// Blocked names get the configured block behaviour, others default_answer.
// nullopt for unparseable queries or non-queries.
std::optional<std::vector<std::uint8_t>> answer(const MockProviderSpec& spec,
                                                std::span<const std::uint8_t> query);

// A running set of UDP servers. stop() is idempotent and also runs on
// destruction.
class Farm {
 public:
  // Throws Error{Bind}.
  static std::unique_ptr<Farm> serve(const FarmConfig& config, int threads_per_provider = 4);

  ~Farm();
  Farm(const Farm&) = delete;
  Farm& operator=(const Farm&) = delete;

  void stop();
  bool running() const { return !stopped_.load(); }

  // Bound endpoint for provider i (ephemeral ports resolved).
  dns::Endpoint endpoint(std::size_t i) const;
  std::size_t size() const { return providers_.size(); }
  std::uint64_t queries_served() const { return served_.load(); }
  std::uint64_t queries_dropped() const { return dropped_.load(); }

  nlohmann::ordered_json manifest() const;

 private:
  struct Provider {
    MockProviderSpec spec;
    int fd = -1;
    dns::Endpoint bound;
    std::mt19937_64 rng;
    std::mutex rng_mu;
  };

  Farm() = default;
  void serve_loop(Provider& p);

  std::vector<std::unique_ptr<Provider>> providers_;
  std::vector<std::jthread> threads_;
  std::atomic<bool> stopped_{false};
  std::atomic<std::uint64_t> served_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::uint64_t seed_ = 0;
  std::mutex stop_mu_;
};

}  // namespace admal::mockdns
