#include "admal/config.hpp"

#include <cstdlib>
#include <set>

#include "admal/error.hpp"
#include "admal/util.hpp"

namespace admal {
namespace {

using json = nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

std::vector<std::filesystem::path> path_list(const json& j, const char* key, const std::filesystem::path& base) {
  std::vector<std::filesystem::path> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) fail(ErrorCode::Config, std::string(key) + " must be an array of paths");
  for (const auto& p : arr) out.push_back(resolve(base, p.get<std::string>()));
  return out;
}

void check_keys(const json& j, std::string_view where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorCode::Config, std::string(where) + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items()) {
    if (!ok.count(k)) fail(ErrorCode::Config, "unknown key " + std::string(where) + "." + k);
  }
}

}  // namespace

PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  try {
    check_keys(doc, "config", {"campaign_id", "inputs", "corpus", "repository", "out_dir", "resolvers", "limits",
                               "ti", "adlists", "analytics", "mock_farm"});
    cfg.digest = "sha256:" + sha256_hex(doc.dump());
    cfg.campaign_id = doc.value("campaign_id", std::string());

    if (doc.contains("inputs")) {
      const auto& in = doc["inputs"];
      check_keys(in, "inputs", {"url_lists", "captures"});
      cfg.url_lists = path_list(in, "url_lists", base_dir);
      cfg.captures = path_list(in, "captures", base_dir);
    }

    if (!doc.contains("repository")) fail(ErrorCode::Config, "repository is required");
    if (doc["repository"].is_string()) {
      cfg.repository = resolve(base_dir, doc["repository"].get<std::string>());
    } else {
      const auto& r = doc["repository"];
      check_keys(r, "repository", {"path", "durability"});
      cfg.repository = resolve(base_dir, r.at("path").get<std::string>());
      const auto d = r.value("durability", std::string("flush"));
      if (d == "flush") cfg.durability = Durability::Flush;
      else if (d == "fsync") cfg.durability = Durability::Fsync;
      else fail(ErrorCode::Config, "repository.durability must be flush or fsync");
    }

    cfg.corpus_path = cfg.repository / "corpus.txt";
    if (doc.contains("corpus")) {
      const auto& c = doc["corpus"];
      check_keys(c, "corpus", {"path", "collapse_registrable", "public_suffix_list"});
      if (c.contains("path")) cfg.corpus_path = resolve(base_dir, c["path"].get<std::string>());
      cfg.collapse_registrable = c.value("collapse_registrable", false);
      if (c.contains("public_suffix_list") && !c["public_suffix_list"].is_null()) {
        cfg.public_suffix_list = resolve(base_dir, c["public_suffix_list"].get<std::string>());
      }
    }
    cfg.out_dir = resolve(base_dir, doc.value("out_dir", std::string("out")));

    int default_timeout = 3000;
    int default_retries = 2;
    if (doc.contains("limits")) {
      const auto& l = doc["limits"];
      check_keys(l, "limits", {"max_inflight", "qps_per_provider", "timeout_ms", "retries", "query_aaaa"});
      cfg.limits.max_inflight = l.value("max_inflight", cfg.limits.max_inflight);
      cfg.limits.qps_per_provider = l.value("qps_per_provider", cfg.limits.qps_per_provider);
      cfg.limits.query_aaaa = l.value("query_aaaa", false);
      default_timeout = l.value("timeout_ms", default_timeout);
      default_retries = l.value("retries", default_retries);
    }
    if (cfg.limits.max_inflight < 1) fail(ErrorCode::Config, "limits.max_inflight must be >= 1");
    if (cfg.limits.qps_per_provider <= 0) fail(ErrorCode::Config, "limits.qps_per_provider must be > 0");

    if (doc.contains("resolvers")) {
      for (auto pj : doc["resolvers"]) {
        if (!pj.contains("timeout_ms")) pj["timeout_ms"] = default_timeout;
        if (!pj.contains("retries")) pj["retries"] = default_retries;
        cfg.resolvers.push_back(dns::profile_from_json(pj));
      }
    } else {
      cfg.resolvers = dns::default_profiles();
      for (auto& p : cfg.resolvers) {
        p.timeout_ms = default_timeout;
        p.retries = default_retries;
      }
    }
    std::set<std::string> ids;
    for (const auto& p : cfg.resolvers) {
      if (!ids.insert(p.provider_id).second) fail(ErrorCode::Config, "duplicate provider_id: " + p.provider_id);
    }

    if (doc.contains("ti")) {
      const auto& t = doc["ti"];
      check_keys(t, "ti", {"mode", "provider_id", "fixture", "base_url", "api_key_header", "field_paths",
                           "requests_per_minute", "retries", "timeout_ms", "cache"});
      const auto mode = t.value("mode", std::string("none"));
      if (mode == "none") cfg.ti.mode = TiConfig::Mode::None;
      else if (mode == "fixture") cfg.ti.mode = TiConfig::Mode::Fixture;
      else if (mode == "live") cfg.ti.mode = TiConfig::Mode::Live;
      else fail(ErrorCode::Config, "ti.mode must be none, fixture or live");
      cfg.ti.provider_id = t.value("provider_id", cfg.ti.provider_id);
      if (cfg.ti.mode == TiConfig::Mode::Fixture) {
        if (!t.contains("fixture")) fail(ErrorCode::Config, "ti.fixture is required in fixture mode");
        cfg.ti.fixture_path = resolve(base_dir, t["fixture"].get<std::string>());
      }
      if (cfg.ti.mode == TiConfig::Mode::Live) {
        if (!t.contains("base_url")) fail(ErrorCode::Config, "ti.base_url is required in live mode");
        cfg.ti.live.base_url = t["base_url"].get<std::string>();
      }
      cfg.ti.live.api_key_header = t.value("api_key_header", cfg.ti.live.api_key_header);
      cfg.ti.live.requests_per_minute = t.value("requests_per_minute", cfg.ti.live.requests_per_minute);
      cfg.ti.live.retries = t.value("retries", cfg.ti.live.retries);
      cfg.ti.live.timeout = std::chrono::milliseconds(t.value("timeout_ms", 30000));
      if (t.contains("field_paths")) {
        const auto& f = t["field_paths"];
        check_keys(f, "ti.field_paths",
                   {"harmless", "undetected", "suspicious", "malicious", "timeout", "partners", "partner_category_key"});
        auto& fp = cfg.ti.live.fields;
        fp.harmless = f.value("harmless", fp.harmless);
        fp.undetected = f.value("undetected", fp.undetected);
        fp.suspicious = f.value("suspicious", fp.suspicious);
        fp.malicious = f.value("malicious", fp.malicious);
        fp.timeout = f.value("timeout", fp.timeout);
        fp.partners = f.value("partners", fp.partners);
        fp.partner_category_key = f.value("partner_category_key", fp.partner_category_key);
      }
      if (cfg.ti.live.requests_per_minute <= 0) fail(ErrorCode::Config, "ti.requests_per_minute must be > 0");
      cfg.ti.cache_path = cfg.repository / "ti-cache.jsonl";
      if (t.contains("cache")) {
        if (t["cache"].is_null()) cfg.ti.cache_path.reset();
        else cfg.ti.cache_path = resolve(base_dir, t["cache"].get<std::string>());
      }
    }
    if (const char* key = std::getenv(kTiApiKeyEnv)) cfg.ti.live.api_key = key;

    if (doc.contains("adlists")) {
      const auto& a = doc["adlists"];
      check_keys(a, "adlists", {"files", "subdomain_matching"});
      cfg.list_files = path_list(a, "files", base_dir);
      auto m = ads::parse_subdomain_matching(a.value("subdomain_matching", std::string("strict")));
      if (!m) fail(ErrorCode::Config, "adlists.subdomain_matching must be strict or always");
      cfg.subdomain_matching = *m;
    }

    auto& an = cfg.analytics;
    an.provider_order.clear();
    for (const auto& p : cfg.resolvers) an.provider_order.push_back(p.provider_id);
    an.ti_provider = cfg.ti.provider_id;
    if (doc.contains("analytics")) {
      const auto& a = doc["analytics"];
      check_keys(a, "analytics", {"percent_mode", "threat_share_mode", "ad_threat_share_mode", "agreement_denominator",
                                  "threat_share_base", "providers", "workers", "corpus_size"});
      auto mode = [&](const char* key, analytics::PercentMode def) {
        if (!a.contains(key)) return def;
        auto m = analytics::parse_percent_mode(a[key].get<std::string>());
        if (!m) fail(ErrorCode::Config, std::string("analytics.") + key + " must be truncate1 or truncate2");
        return *m;
      };
      an.percent_mode = mode("percent_mode", an.percent_mode);
      an.ti.threat_share_mode = mode("threat_share_mode", an.ti.threat_share_mode);
      an.ti.ad_threat_share_mode = mode("ad_threat_share_mode", an.ti.ad_threat_share_mode);
      const auto denom = a.value("agreement_denominator", std::string("opinions"));
      if (denom == "opinions") an.ti.denominator = ti::AgreementDenominator::Opinions;
      else if (denom == "all_partners") an.ti.denominator = ti::AgreementDenominator::AllPartners;
      else fail(ErrorCode::Config, "analytics.agreement_denominator must be opinions or all_partners");
      if (a.contains("threat_share_base")) {
        const auto& b = a["threat_share_base"];
        if (b.is_number_unsigned()) {
          an.ti.base = analytics::ThreatShareBase::Fixed;
          an.ti.fixed_base = b.get<std::uint64_t>();
          if (an.ti.fixed_base == 0) fail(ErrorCode::Config, "analytics.threat_share_base must be > 0");
        } else if (b == "with_report") {
          an.ti.base = analytics::ThreatShareBase::WithReport;
        } else if (b == "corpus") {
          an.ti.base = analytics::ThreatShareBase::Corpus;
        } else {
          fail(ErrorCode::Config, "analytics.threat_share_base must be with_report, corpus or a positive integer");
        }
      }
      if (a.contains("providers")) an.provider_order = a["providers"].get<std::vector<std::string>>();
      an.workers = a.value("workers", 1);
      if (an.workers < 1) fail(ErrorCode::Config, "analytics.workers must be >= 1");
      if (a.contains("corpus_size")) an.corpus_size = a["corpus_size"].get<std::uint64_t>();
    }

    if (doc.contains("mock_farm")) {
      cfg.mock_farm = mockdns::parse_farm_config(doc["mock_farm"].dump(), base_dir.string());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, std::string("config: ") + e.what());
  }
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::Config, e.what());
  }
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  auto cfg = parse_config(text, base);
  cfg.config_path = path;
  return cfg;
}

}  // namespace admal
