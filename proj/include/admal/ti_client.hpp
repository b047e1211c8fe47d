#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>

#include "admal/domain.hpp"
#include "admal/rate_limit.hpp"
#include "admal/util.hpp"
#include "json.hpp"

namespace admal::ti {

enum class Category { Harmless, Undetected, Suspicious, Malicious, Timeout };

const char* to_string(Category c);
std::optional<Category> parse_category(std::string_view s);

struct TiReport {
  Domain domain;
  std::uint64_t harmless = 0;
  std::uint64_t undetected = 0;
  std::uint64_t suspicious = 0;
  std::uint64_t malicious = 0;
  std::uint64_t timeout = 0;
  std::optional<std::map<std::string, Category>> partner_verdicts;
  std::string fetched_at;

  // Throws Error{Schema} if partner tallies disagree with the count fields.
  void validate() const;
};

struct NoReport {
  Domain domain;
};

using TiLookupResult = std::variant<TiReport, NoReport>;

const Domain& domain_of(const TiLookupResult& r);

// True iff at least one partner voted suspicious or malicious.
bool threat_flag(const TiReport& r);

enum class AgreementDenominator {
  Opinions,     // harmless + suspicious + malicious
  AllPartners,  // every category including undetected and timeout
};

// Share of partners flagging the domain, in [0,1]. Throws Error{Undefined}
// when the denominator is zero.
double agreement_ratio(const TiReport& r, AgreementDenominator mode = AgreementDenominator::Opinions);

nlohmann::ordered_json payload_json(const TiLookupResult& r);
TiLookupResult result_from_payload(const Domain& d, const nlohmann::json& payload);  // throws Error{Schema}

// One fixture line: {"domain":…,"harmless":n,…,"partners":{name:category}?}
TiReport report_from_fixture_json(const nlohmann::json& j);  // throws Error{Schema}

class Provider {
 public:
  virtual ~Provider() = default;
  // Throws Error{Auth} or Error{Transport}.
  virtual TiLookupResult fetch(const Domain& d) = 0;
};

// Offline provider: JSONL fixture, one report per line. Domains missing from
// the fixture yield NoReport.
class FixtureProvider : public Provider {
 public:
  static std::unique_ptr<FixtureProvider> load(const std::filesystem::path& path);
  static std::unique_ptr<FixtureProvider> from_text(std::string_view jsonl);

  TiLookupResult fetch(const Domain& d) override;
  std::size_t size() const { return reports_.size(); }
  std::size_t fetch_count() const { return fetches_; }

 private:
  std::unordered_map<std::string, TiReport> reports_;
  std::size_t fetches_ = 0;
  mutable std::mutex mu_;
};

// JSON pointers into the live response body for each tally.
struct FieldPaths {
  std::string harmless = "/data/attributes/last_analysis_stats/harmless";
  std::string undetected = "/data/attributes/last_analysis_stats/undetected";
  std::string suspicious = "/data/attributes/last_analysis_stats/suspicious";
  std::string malicious = "/data/attributes/last_analysis_stats/malicious";
  std::string timeout = "/data/attributes/last_analysis_stats/timeout";
  // Object of partner name -> {"category": …}; empty to skip.
  std::string partners = "/data/attributes/last_analysis_results";
  std::string partner_category_key = "category";
};

struct LiveConfig {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string api_key;
  std::string api_key_header = "x-apikey";
  FieldPaths fields;
  double requests_per_minute = 4.0;
  int retries = 2;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds backoff{1000};
};

// Maps a live response body onto a TiReport. Throws Error{Schema}.
TiReport report_from_live_json(const Domain& d, const nlohmann::json& body, const FieldPaths& fields,
                               const std::string& fetched_at);

// HTTP(S) GET {base_url}/domains/{domain}. 404 -> NoReport, 401/403 ->
// Error{Auth}, anything else after retries -> Error{Transport}.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(LiveConfig cfg, Clock clock = system_clock());
  ~HttpProvider() override;

  TiLookupResult fetch(const Domain& d) override;
  std::size_t request_count() const { return requests_.load(); }

 private:
  struct Impl;
  LiveConfig cfg_;
  Clock clock_;
  TokenBucket bucket_;
  std::atomic<std::size_t> requests_{0};
  std::unique_ptr<Impl> impl_;
};

// Memoizes results in memory and, when a path is given, in an append-only
// JSONL file so restarted campaigns do not re-fetch. Transport and auth
// failures are never cached.
class CachingClient {
 public:
  CachingClient(Provider& upstream, std::optional<std::filesystem::path> cache_path = std::nullopt);

  TiLookupResult fetch_report(const Domain& d);
  std::size_t cache_size() const;

 private:
  Provider& upstream_;
  std::optional<std::filesystem::path> cache_path_;
  std::unordered_map<std::string, TiLookupResult> cache_;
  // Per-domain locks so concurrent callers for one domain share a fetch.
  std::unordered_map<std::string, std::shared_ptr<std::mutex>> inflight_;
  mutable std::mutex mu_;
};

}  // namespace admal::ti
