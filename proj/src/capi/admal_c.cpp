#include "admal/admal.h"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include "admal/adlists.hpp"
#include "admal/analytics.hpp"
#include "admal/config.hpp"
#include "admal/domain.hpp"
#include "admal/error.hpp"
#include "admal/mockdns.hpp"
#include "admal/pipeline.hpp"
#include "admal/util.hpp"

struct admal_pipeline {
  std::atomic<bool> stop{false};
  std::unique_ptr<admal::Pipeline> pipeline;
  admal::PipelineConfig cfg;

  // Config overrides invalidate the pipeline; rebuild lazily.
  admal::Pipeline& get() {
    if (!pipeline) pipeline = std::make_unique<admal::Pipeline>(cfg, &stop);
    return *pipeline;
  }
};

struct admal_matcher {
  admal::ads::AdMatcher matcher;
};

struct admal_mockfarm {
  std::unique_ptr<admal::mockdns::Farm> farm;
};

namespace {

thread_local std::string g_last_error;

admal_status status_of(admal::ErrorCode c) { return static_cast<admal_status>(static_cast<int>(c)); }

template <typename F>
admal_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return ADMAL_OK;
  } catch (const admal::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown exception";
  }
  return ADMAL_E_INTERNAL;
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup(s);
}

void need(const void* p, const char* what) {
  if (!p) admal::fail(admal::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

std::optional<std::filesystem::path> opt_path(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::filesystem::path(p);
}

nlohmann::ordered_json counts(const std::map<std::string, std::size_t>& m) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

}  // namespace

extern "C" {

const char* admal_last_error(void) { return g_last_error.c_str(); }

const char* admal_status_name(admal_status s) {
  if (s == ADMAL_OK) return "ok";
  if (s == ADMAL_E_INTERNAL) return "internal";
  return admal::to_string(static_cast<admal::ErrorCode>(s));
}

const char* admal_version(void) { return "0.1.0"; }

void admal_free_string(char* s) { std::free(s); }

void admal_set_log_level(int level) {
  if (level < 0) level = 0;
  if (level > 3) level = 3;
  admal::set_log_level(static_cast<admal::LogLevel>(level));
}

admal_status admal_extract_domain(const char* url, char** out_domain) {
  return guarded([&] {
    need(url, "url");
    need(out_domain, "out_domain");
    *out_domain = dup(admal::extract_domain(url).str());
  });
}

admal_status admal_percent(uint64_t count, uint64_t base, int decimals, char** out_text) {
  return guarded([&] {
    need(out_text, "out_text");
    if (decimals != 1 && decimals != 2) admal::fail(admal::ErrorCode::InvalidArgument, "decimals must be 1 or 2");
    const auto mode = decimals == 1 ? admal::analytics::PercentMode::Truncate1 : admal::analytics::PercentMode::Truncate2;
    *out_text = dup(admal::analytics::percent(count, base, mode).str());
  });
}

admal_status admal_pipeline_open(const char* config_path, admal_pipeline** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(out, "out");
    auto p = std::make_unique<admal_pipeline>();
    p->cfg = admal::load_config(config_path);
    *out = p.release();
  });
}

void admal_pipeline_close(admal_pipeline* p) { delete p; }

admal_status admal_pipeline_set_campaign(admal_pipeline* p, const char* campaign_id) {
  return guarded([&] {
    need(p, "pipeline");
    if (!campaign_id) return;
    if (!*campaign_id) admal::fail(admal::ErrorCode::InvalidArgument, "campaign id is empty");
    p->cfg.campaign_id = campaign_id;
    p->pipeline.reset();
  });
}

admal_status admal_pipeline_set_out_dir(admal_pipeline* p, const char* dir) {
  return guarded([&] {
    need(p, "pipeline");
    if (!dir) return;
    p->cfg.out_dir = dir;
    p->pipeline.reset();
  });
}

admal_status admal_pipeline_set_limits(admal_pipeline* p, int max_inflight, double qps_per_provider) {
  return guarded([&] {
    need(p, "pipeline");
    if (max_inflight > 0) p->cfg.limits.max_inflight = max_inflight;
    if (qps_per_provider > 0) p->cfg.limits.qps_per_provider = qps_per_provider;
    p->pipeline.reset();
  });
}

admal_status admal_pipeline_set_lists(admal_pipeline* p, const char* const* list_paths, size_t n) {
  return guarded([&] {
    need(p, "pipeline");
    if (n == 0) return;
    need(list_paths, "list_paths");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n; ++i) {
      need(list_paths[i], "list path");
      paths.emplace_back(list_paths[i]);
    }
    p->cfg.list_files = std::move(paths);
    p->pipeline.reset();
  });
}

void admal_pipeline_request_stop(admal_pipeline* p) {
  if (p) p->stop.store(true);
}

admal_status admal_pipeline_ingest(admal_pipeline* p, char** out_summary) {
  return guarded([&] {
    need(p, "pipeline");
    const auto s = p->get().ingest();
    nlohmann::ordered_json j;
    j["records"] = s.records;
    j["domains"] = s.domains;
    j["line_rejects"] = s.line_rejects;
    j["ip_literal_rejects"] = s.ip_literal_rejects;
    j["invalid_host_rejects"] = s.invalid_host_rejects;
    j["corpus"] = p->cfg.corpus_path.string();
    put(out_summary, j.dump());
  });
}

admal_status admal_pipeline_dns_scan(admal_pipeline* p, const char* domains_path, char** out_summary) {
  return guarded([&] {
    need(p, "pipeline");
    const auto s = p->get().dns_scan(opt_path(domains_path));
    nlohmann::ordered_json j;
    j["campaign"] = p->cfg.campaign_id;
    j["queried"] = s.queried;
    j["skipped"] = s.skipped;
    j["blocked"] = counts(s.blocked);
    j["inconclusive"] = counts(s.inconclusive);
    j["interrupted"] = s.interrupted;
    put(out_summary, j.dump());
  });
}

admal_status admal_pipeline_ti_fetch(admal_pipeline* p, const char* domains_path, char** out_summary) {
  return guarded([&] {
    need(p, "pipeline");
    const auto s = p->get().ti_fetch(opt_path(domains_path));
    nlohmann::ordered_json j;
    j["campaign"] = p->cfg.campaign_id;
    j["fetched"] = s.fetched;
    j["skipped"] = s.skipped;
    j["with_report"] = s.with_report;
    j["no_report"] = s.no_report;
    j["unfetched"] = s.unfetched;
    j["interrupted"] = s.interrupted;
    put(out_summary, j.dump());
  });
}

admal_status admal_pipeline_ads_classify(admal_pipeline* p, const char* domains_path, const char* out_path,
                                         int record, char** out_summary) {
  return guarded([&] {
    need(p, "pipeline");
    std::size_t n = 0;
    if (!out_path || std::string(out_path) == "-") {
      n = p->get().ads_classify(std::cout, {}, opt_path(domains_path), record != 0);
      std::cout.flush();
    } else {
      std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
      if (!f) admal::fail(admal::ErrorCode::Io, std::string("cannot open ") + out_path);
      n = p->get().ads_classify(f, {}, opt_path(domains_path), record != 0);
      f.flush();
      if (!f) admal::fail(admal::ErrorCode::Io, std::string("write failed: ") + out_path);
    }
    nlohmann::ordered_json j;
    j["ad_domains"] = n;
    put(out_summary, j.dump());
  });
}

admal_status admal_pipeline_analyze(admal_pipeline* p, char** out_summary) {
  return guarded([&] {
    need(p, "pipeline");
    const auto files = p->get().analyze();
    nlohmann::ordered_json j;
    j["campaign"] = p->cfg.campaign_id;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : files) arr.push_back(f.string());
    j["artifacts"] = std::move(arr);
    put(out_summary, j.dump());
  });
}

admal_status admal_pipeline_run_all(admal_pipeline* p, char** out_summary) {
  admal_status st = ADMAL_OK;
  nlohmann::ordered_json j;
  auto step = [&](const char* name, auto&& fn) {
    if (st != ADMAL_OK || p->stop.load()) return;
    char* s = nullptr;
    st = fn(&s);
    if (s) {
      j[name] = nlohmann::ordered_json::parse(s);
      admal_free_string(s);
    }
  };
  if (!p) return guarded([] { need(nullptr, "pipeline"); });
  step("ingest", [&](char** s) { return admal_pipeline_ingest(p, s); });
  step("dns_scan", [&](char** s) { return admal_pipeline_dns_scan(p, nullptr, s); });
  if (p->cfg.ti.mode != admal::TiConfig::Mode::None) {
    step("ti_fetch", [&](char** s) { return admal_pipeline_ti_fetch(p, nullptr, s); });
  }
  if (!p->cfg.list_files.empty()) {
    auto out = p->cfg.out_dir / "ads.jsonl";
    step("ads_classify", [&](char** s) {
      auto rc = guarded([&] { std::filesystem::create_directories(p->cfg.out_dir); });
      return rc != ADMAL_OK ? rc : admal_pipeline_ads_classify(p, nullptr, out.c_str(), 1, s);
    });
  }
  step("analyze", [&](char** s) { return admal_pipeline_analyze(p, s); });
  j["interrupted"] = p->stop.load();
  if (st == ADMAL_OK) {
    return guarded([&] { put(out_summary, j.dump()); });
  }
  return st;
}

admal_status admal_pipeline_report_json(admal_pipeline* p, char** out_json) {
  return guarded([&] {
    need(p, "pipeline");
    need(out_json, "out_json");
    *out_json = dup(admal::analytics::report_json(p->get().build_report()));
  });
}

admal_status admal_matcher_load(const char* const* list_paths, size_t n, const char* mode, admal_matcher** out) {
  return guarded([&] {
    need(out, "out");
    if (n > 0) need(list_paths, "list_paths");
    auto m = admal::ads::parse_subdomain_matching(mode ? mode : "strict");
    if (!m) admal::fail(admal::ErrorCode::InvalidArgument, "mode must be strict or always");
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n; ++i) {
      need(list_paths[i], "list path");
      paths.emplace_back(list_paths[i]);
    }
    auto h = std::make_unique<admal_matcher>();
    h->matcher = admal::ads::load_lists(paths, *m).matcher;
    *out = h.release();
  });
}

void admal_matcher_free(admal_matcher* m) { delete m; }

admal_status admal_matcher_classify(const admal_matcher* m, const char* domain, int* out_is_ad, char** out_json) {
  return guarded([&] {
    need(m, "matcher");
    need(domain, "domain");
    const auto d = admal::Domain::parse(domain);
    const auto hit = m->matcher.match(d);
    if (out_is_ad) *out_is_ad = hit ? 1 : 0;
    put(out_json, admal::ads::classification_jsonl(d, hit));
  });
}

admal_status admal_mockfarm_start(const char* config_json, const char* base_dir, admal_mockfarm** out) {
  return guarded([&] {
    need(config_json, "config_json");
    need(out, "out");
    const auto cfg = admal::mockdns::parse_farm_config(config_json, base_dir ? base_dir : ".");
    auto h = std::make_unique<admal_mockfarm>();
    h->farm = admal::mockdns::Farm::serve(cfg);
    *out = h.release();
  });
}

size_t admal_mockfarm_size(const admal_mockfarm* f) { return f ? f->farm->size() : 0; }

admal_status admal_mockfarm_endpoint(const admal_mockfarm* f, size_t i, char** out) {
  return guarded([&] {
    need(f, "farm");
    need(out, "out");
    if (i >= f->farm->size()) admal::fail(admal::ErrorCode::InvalidArgument, "provider index out of range");
    *out = dup(f->farm->endpoint(i).to_string());
  });
}

admal_status admal_mockfarm_manifest(const admal_mockfarm* f, char** out_json) {
  return guarded([&] {
    need(f, "farm");
    need(out_json, "out_json");
    *out_json = dup(f->farm->manifest().dump());
  });
}

void admal_mockfarm_stop(admal_mockfarm* f) {
  if (!f) return;
  f->farm->stop();
  delete f;
}

}  // extern "C"
