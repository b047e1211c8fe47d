#include "admal/ti_client.hpp"

#include <fstream>
#include <thread>

#include "admal/error.hpp"
#include "httplib.h"

namespace admal::ti {
namespace {

using ojson = nlohmann::ordered_json;

std::uint64_t count_field(const nlohmann::json& j, const char* key, bool required) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    if (required) fail(ErrorCode::Schema, std::string("missing field: ") + key);
    return 0;
  }
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    fail(ErrorCode::Schema, std::string("field must be a non-negative integer: ") + key);
  }
  return it->get<std::uint64_t>();
}

std::map<std::string, Category> partners_from_json(const nlohmann::json& j, const std::string& category_key) {
  if (!j.is_object()) fail(ErrorCode::Schema, "partners must be an object");
  std::map<std::string, Category> out;
  for (const auto& [name, v] : j.items()) {
    std::string cat;
    if (v.is_string()) {
      cat = v.get<std::string>();
    } else if (v.is_object() && v.contains(category_key) && v[category_key].is_string()) {
      cat = v[category_key].get<std::string>();
    } else {
      fail(ErrorCode::Schema, "partner entry without category: " + name);
    }
    auto c = parse_category(cat);
    if (!c) fail(ErrorCode::Schema, "unknown category for " + name + ": " + cat);
    out.emplace(name, *c);
  }
  return out;
}

std::uint64_t pointer_count(const nlohmann::json& body, const std::string& ptr) {
  if (ptr.empty()) return 0;
  const nlohmann::json::json_pointer jp(ptr);
  if (!body.contains(jp) || body.at(jp).is_null()) return 0;
  const auto& v = body.at(jp);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    fail(ErrorCode::Schema, "tally at " + ptr + " is not a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace

const char* to_string(Category c) {
  switch (c) {
    case Category::Harmless: return "harmless";
    case Category::Undetected: return "undetected";
    case Category::Suspicious: return "suspicious";
    case Category::Malicious: return "malicious";
    case Category::Timeout: return "timeout";
  }
  return "undetected";
}

std::optional<Category> parse_category(std::string_view s) {
  for (auto c : {Category::Harmless, Category::Undetected, Category::Suspicious, Category::Malicious,
                 Category::Timeout}) {
    if (s == to_string(c)) return c;
  }
  // Vendor spelling for partners that do not cover the resource type.
  if (s == "type-unsupported") return Category::Undetected;
  return std::nullopt;
}

void TiReport::validate() const {
  if (!partner_verdicts) return;
  std::uint64_t tally[5] = {};
  for (const auto& [_, c] : *partner_verdicts) ++tally[static_cast<int>(c)];
  if (tally[0] != harmless || tally[1] != undetected || tally[2] != suspicious || tally[3] != malicious ||
      tally[4] != timeout) {
    fail(ErrorCode::Schema, "partner verdicts disagree with counts for " + domain.str());
  }
}

const Domain& domain_of(const TiLookupResult& r) {
  return std::visit([](const auto& v) -> const Domain& { return v.domain; }, r);
}

bool threat_flag(const TiReport& r) { return r.suspicious + r.malicious >= 1; }

double agreement_ratio(const TiReport& r, AgreementDenominator mode) {
  const auto threat = r.suspicious + r.malicious;
  auto denom = r.harmless + threat;
  if (mode == AgreementDenominator::AllPartners) denom += r.undetected + r.timeout;
  if (denom == 0) fail(ErrorCode::Undefined, "no partner expressed an opinion on " + r.domain.str());
  return static_cast<double>(threat) / static_cast<double>(denom);
}

nlohmann::ordered_json payload_json(const TiLookupResult& r) {
  ojson j;
  if (const auto* nr = std::get_if<NoReport>(&r)) {
    (void)nr;
    j["status"] = "no_report";
    return j;
  }
  const auto& rep = std::get<TiReport>(r);
  j["status"] = "report";
  j["harmless"] = rep.harmless;
  j["undetected"] = rep.undetected;
  j["suspicious"] = rep.suspicious;
  j["malicious"] = rep.malicious;
  j["timeout"] = rep.timeout;
  if (rep.partner_verdicts) {
    ojson p = ojson::object();
    for (const auto& [name, c] : *rep.partner_verdicts) p[name] = to_string(c);
    j["partners"] = std::move(p);
  } else {
    j["partners"] = nullptr;
  }
  j["fetched_at"] = rep.fetched_at;
  return j;
}

TiLookupResult result_from_payload(const Domain& d, const nlohmann::json& payload) {
  if (!payload.is_object()) fail(ErrorCode::Schema, "ti payload must be an object");
  const auto status = payload.value("status", std::string());
  if (status == "no_report") return NoReport{d};
  if (status != "report") fail(ErrorCode::Schema, "unknown ti status: " + status);
  TiReport r{d};
  r.harmless = count_field(payload, "harmless", true);
  r.undetected = count_field(payload, "undetected", true);
  r.suspicious = count_field(payload, "suspicious", true);
  r.malicious = count_field(payload, "malicious", true);
  r.timeout = count_field(payload, "timeout", false);
  if (auto p = payload.find("partners"); p != payload.end() && !p->is_null()) {
    r.partner_verdicts = partners_from_json(*p, "category");
  }
  r.fetched_at = payload.value("fetched_at", std::string());
  r.validate();
  return r;
}

TiReport report_from_fixture_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::Schema, "fixture line must be an object");
  auto it = j.find("domain");
  if (it == j.end() || !it->is_string()) fail(ErrorCode::Schema, "missing field: domain");
  TiReport r{Domain::parse(it->get<std::string>())};
  r.harmless = count_field(j, "harmless", true);
  r.undetected = count_field(j, "undetected", true);
  r.suspicious = count_field(j, "suspicious", true);
  r.malicious = count_field(j, "malicious", true);
  r.timeout = count_field(j, "timeout", false);
  if (auto p = j.find("partners"); p != j.end() && !p->is_null()) {
    r.partner_verdicts = partners_from_json(*p, "category");
  }
  r.fetched_at = j.value("fetched_at", std::string());
  r.validate();
  return r;
}

std::unique_ptr<FixtureProvider> FixtureProvider::from_text(std::string_view jsonl) {
  auto fp = std::unique_ptr<FixtureProvider>(new FixtureProvider());
  std::size_t line_no = 0;
  for (auto line : split_lines(jsonl)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto r = report_from_fixture_json(nlohmann::json::parse(line));
      auto key = r.domain.str();
      fp->reports_.insert_or_assign(std::move(key), std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Schema, "fixture line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorCode::Schema, "fixture line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return fp;
}

std::unique_ptr<FixtureProvider> FixtureProvider::load(const std::filesystem::path& path) {
  return from_text(read_file(path));
}

TiLookupResult FixtureProvider::fetch(const Domain& d) {
  std::lock_guard lock(mu_);
  ++fetches_;
  auto it = reports_.find(d.str());
  if (it == reports_.end()) return NoReport{d};
  return it->second;
}

TiReport report_from_live_json(const Domain& d, const nlohmann::json& body, const FieldPaths& fields,
                               const std::string& fetched_at) {
  TiReport r{d};
  try {
    r.harmless = pointer_count(body, fields.harmless);
    r.undetected = pointer_count(body, fields.undetected);
    r.suspicious = pointer_count(body, fields.suspicious);
    r.malicious = pointer_count(body, fields.malicious);
    r.timeout = pointer_count(body, fields.timeout);
    if (!fields.partners.empty()) {
      const nlohmann::json::json_pointer jp(fields.partners);
      if (body.contains(jp) && body.at(jp).is_object()) {
        auto partners = partners_from_json(body.at(jp), fields.partner_category_key);
        // Only keep per-partner detail when it is consistent with the tallies.
        TiReport probe = r;
        probe.partner_verdicts = std::move(partners);
        try {
          probe.validate();
          r.partner_verdicts = std::move(probe.partner_verdicts);
        } catch (const Error&) {
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Schema, std::string("bad field path: ") + e.what());
  }
  r.fetched_at = fetched_at;
  return r;
}

struct HttpProvider::Impl {
  std::unique_ptr<httplib::Client> client;
  std::string prefix;
  std::mutex mu;
};

HttpProvider::HttpProvider(LiveConfig cfg, Clock clock)
    : cfg_(std::move(cfg)),
      clock_(std::move(clock)),
      bucket_(cfg_.requests_per_minute / 60.0),
      impl_(std::make_unique<Impl>()) {
  auto scheme_end = cfg_.base_url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorCode::Config, "ti base_url needs a scheme: " + cfg_.base_url);
  auto path_start = cfg_.base_url.find('/', scheme_end + 3);
  std::string origin = cfg_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) impl_->prefix = cfg_.base_url.substr(path_start);
  while (!impl_->prefix.empty() && impl_->prefix.back() == '/') impl_->prefix.pop_back();
  impl_->client = std::make_unique<httplib::Client>(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout).count();
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout).count() % 1000000;
  impl_->client->set_connection_timeout(secs, usecs);
  impl_->client->set_read_timeout(secs, usecs);
}

HttpProvider::~HttpProvider() = default;

TiLookupResult HttpProvider::fetch(const Domain& d) {
  const std::string path = impl_->prefix + "/domains/" + d.str();
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace(cfg_.api_key_header, cfg_.api_key);
  std::string last_error = "no attempt";
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * attempt);
    bucket_.acquire();
    ++requests_;
    httplib::Result res;
    {
      std::lock_guard lock(impl_->mu);
      res = impl_->client->Get(path, headers);
    }
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 404) return NoReport{d};
    if (status == 401 || status == 403) fail(ErrorCode::Auth, "ti provider rejected credentials (HTTP " + std::to_string(status) + ")");
    if (status == 200) {
      try {
        auto body = nlohmann::json::parse(res->body);
        return report_from_live_json(d, body, cfg_.fields, format_rfc3339(clock_()));
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("unparseable body: ") + e.what();
        continue;
      } catch (const Error& e) {
        fail(ErrorCode::Transport, std::string("unexpected body for ") + d.str() + ": " + e.what());
      }
    }
    last_error = "HTTP " + std::to_string(status);
  }
  fail(ErrorCode::Transport, "ti fetch failed for " + d.str() + ": " + last_error);
}

CachingClient::CachingClient(Provider& upstream, std::optional<std::filesystem::path> cache_path)
    : upstream_(upstream), cache_path_(std::move(cache_path)) {
  if (!cache_path_ || !std::filesystem::exists(*cache_path_)) return;
  const auto text = read_file(*cache_path_);
  for (auto line : split_lines(text)) {
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto d = Domain::parse(j.at("domain").get<std::string>());
      cache_.insert_or_assign(d.str(), result_from_payload(d, j.at("result")));
    } catch (const std::exception&) {
      // A torn line from an interrupted run is refetched.
    }
  }
}

TiLookupResult CachingClient::fetch_report(const Domain& d) {
  std::shared_ptr<std::mutex> slot;
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(d.str()); it != cache_.end()) return it->second;
    auto& s = inflight_[d.str()];
    if (!s) s = std::make_shared<std::mutex>();
    slot = s;
  }
  std::lock_guard fetch_lock(*slot);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(d.str()); it != cache_.end()) return it->second;
  }
  auto result = upstream_.fetch(d);
  std::lock_guard lock(mu_);
  if (cache_path_) {
    ojson line;
    line["domain"] = d.str();
    line["result"] = payload_json(result);
    std::ofstream out(*cache_path_, std::ios::app);
    out << line.dump() << '\n';
    if (!out) fail(ErrorCode::Storage, "cannot append to ti cache " + cache_path_->string());
  }
  cache_.insert_or_assign(d.str(), result);
  inflight_.erase(d.str());
  return result;
}

std::size_t CachingClient::cache_size() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

}  // namespace admal::ti
