#include "admal/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "admal/adlists.hpp"
#include "admal/error.hpp"
#include "admal/ti_client.hpp"
#include "admal/util.hpp"

namespace admal {
namespace {

constexpr const char* kAdProvider = "adlists";

Repository open_repo(const PipelineConfig& cfg) {
  return Repository::open(cfg.repository, RepositoryOptions{cfg.durability});
}

void require_campaign(const PipelineConfig& cfg) {
  if (cfg.campaign_id.empty()) fail(ErrorCode::Config, "campaign_id is not set");
}

}  // namespace

std::vector<Domain> Pipeline::load_domains(const std::optional<std::filesystem::path>& override_path) const {
  const auto path = override_path.value_or(cfg_.corpus_path);
  if (!std::filesystem::exists(path)) {
    fail(ErrorCode::Io, "corpus not found: " + path.string() + " (run ingest first)");
  }
  return read_corpus(read_file(path));
}

IngestSummary Pipeline::ingest(const std::vector<std::filesystem::path>& url_lists,
                               const std::vector<std::filesystem::path>& captures) {
  const auto& lists = url_lists.empty() && captures.empty() ? cfg_.url_lists : url_lists;
  const auto& caps = url_lists.empty() && captures.empty() ? cfg_.captures : captures;
  if (lists.empty() && caps.empty()) fail(ErrorCode::Config, "no url lists or captures to ingest");

  IngestSummary sum;
  std::vector<RequestRecord> records;
  std::string rejects;
  for (const auto& p : lists) {
    auto parsed = parse_url_list(read_file(p));
    sum.line_rejects += parsed.rejects.size();
    for (const auto& r : parsed.rejects) {
      nlohmann::ordered_json j;
      j["file"] = p.string();
      j["line"] = r.line_no;
      j["reason"] = r.reason;
      j["text"] = r.text;
      rejects += j.dump() + "\n";
    }
    for (auto& r : parsed.records) records.push_back(std::move(r));
  }
  for (const auto& p : caps) {
    for (auto& r : parse_capture(read_file(p))) records.push_back(std::move(r));
  }
  sum.records = records.size();

  std::optional<PublicSuffixList> psl;
  DedupeOptions opts;
  if (cfg_.collapse_registrable) {
    if (!cfg_.public_suffix_list) fail(ErrorCode::Config, "collapse_registrable needs corpus.public_suffix_list");
    psl = PublicSuffixList::parse(read_file(*cfg_.public_suffix_list));
    opts.collapse_to_registrable = &*psl;
  }
  auto corpus = dedupe(records, opts);
  sum.ip_literal_rejects = corpus.ip_literal_rejects;
  sum.invalid_host_rejects = corpus.invalid_host_rejects;
  sum.domains = corpus.domains.size();

  write_file_atomic(cfg_.corpus_path, render_corpus(corpus.domains));
  auto rej_path = cfg_.corpus_path;
  rej_path += ".rejects.jsonl";
  write_file_atomic(rej_path, rejects);
  log_event(LogLevel::Info, "ingest.done",
            {{"records", std::to_string(sum.records)},
             {"domains", std::to_string(sum.domains)},
             {"ip_literal_rejects", std::to_string(sum.ip_literal_rejects)},
             {"invalid_host_rejects", std::to_string(sum.invalid_host_rejects)},
             {"line_rejects", std::to_string(sum.line_rejects)}});
  return sum;
}

dns::CampaignStats Pipeline::dns_scan(const std::optional<std::filesystem::path>& domains_path) {
  require_campaign(cfg_);
  const auto domains = load_domains(domains_path);
  auto repo = open_repo(cfg_);
  const auto started = format_rfc3339(clock_());
  dns::CampaignRunner runner(repo, cfg_.campaign_id, clock_);
  auto stats = runner.run(domains, cfg_.resolvers, cfg_.limits, stop_);
  const auto finished = stats.interrupted ? std::string() : format_rfc3339(clock_());
  auto manifest = dns::campaign_manifest(repo, cfg_.campaign_id, cfg_.resolvers, domains.size(), started, finished);
  manifest["config_digest"] = cfg_.digest;
  repo.write_manifest(cfg_.campaign_id, "dns", manifest);
  return stats;
}

TiFetchSummary Pipeline::ti_fetch(const std::optional<std::filesystem::path>& domains_path) {
  require_campaign(cfg_);
  std::unique_ptr<ti::Provider> upstream;
  switch (cfg_.ti.mode) {
    case TiConfig::Mode::None:
      fail(ErrorCode::Config, "ti.mode is none");
    case TiConfig::Mode::Fixture:
      upstream = ti::FixtureProvider::load(cfg_.ti.fixture_path);
      break;
    case TiConfig::Mode::Live:
      if (cfg_.ti.live.api_key.empty()) {
        fail(ErrorCode::Auth, std::string("live TI needs an API key in ") + kTiApiKeyEnv);
      }
      upstream = std::make_unique<ti::HttpProvider>(cfg_.ti.live, clock_);
      break;
  }
  const auto domains = load_domains(domains_path);
  auto repo = open_repo(cfg_);
  ti::CachingClient client(*upstream, cfg_.ti.cache_path);
  const auto& pid = cfg_.ti.provider_id;

  TiFetchSummary sum;
  for (const auto& d : domains) {
    if (stopping()) {
      sum.interrupted = true;
      break;
    }
    if (repo.contains(cfg_.campaign_id, pid, d)) {
      ++sum.skipped;
      continue;
    }
    std::optional<ti::TiLookupResult> res;
    try {
      res = client.fetch_report(d);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transport) throw;
      ++sum.unfetched;
      log_event(LogLevel::Warn, "ti.unfetched", {{"domain", d.str()}, {"error", e.what()}});
      continue;
    }
    ++sum.fetched;
    VerdictRecord rec{d, pid, cfg_.campaign_id, RecordKind::Ti, ti::payload_json(*res).dump(),
                      format_rfc3339(clock_())};
    repo.upsert(rec);
  }
  std::size_t with = 0, none = 0;
  for (const auto& r : repo.query(cfg_.campaign_id, pid, RecordKind::Ti)) {
    (r.payload_json().value("status", "") == "report" ? with : none)++;
  }
  sum.with_report = with;
  sum.no_report = none;
  nlohmann::ordered_json m;
  m["campaign"] = cfg_.campaign_id;
  m["provider"] = pid;
  m["mode"] = cfg_.ti.mode == TiConfig::Mode::Live ? "live" : "fixture";
  m["domains"] = domains.size();
  m["with_report"] = with;
  m["no_report"] = none;
  m["unfetched"] = sum.unfetched;
  m["interrupted"] = sum.interrupted;
  m["config_digest"] = cfg_.digest;
  repo.write_manifest(cfg_.campaign_id, "ti", m);
  return sum;
}

std::size_t Pipeline::ads_classify(std::ostream& out, const std::vector<std::filesystem::path>& lists,
                                   const std::optional<std::filesystem::path>& domains_path, bool record) {
  const auto& files = lists.empty() ? cfg_.list_files : lists;
  if (files.empty()) fail(ErrorCode::Config, "no ad lists configured");
  auto compiled = ads::load_lists(files, cfg_.subdomain_matching);
  const auto domains = load_domains(domains_path);
  std::optional<Repository> repo;
  if (record) {
    require_campaign(cfg_);
    repo.emplace(open_repo(cfg_));
  }
  std::size_t ads_count = 0;
  const auto ts = format_rfc3339(clock_());
  for (const auto& d : domains) {
    const auto m = compiled.matcher.match(d);
    if (m) ++ads_count;
    out << ads::classification_jsonl(d, m) << '\n';
    if (repo) {
      nlohmann::ordered_json p;
      p["is_ad"] = m.has_value();
      p["matched_entry"] = m ? nlohmann::ordered_json(m->matched_entry) : nlohmann::ordered_json(nullptr);
      p["source_list"] = m ? nlohmann::ordered_json(m->source_list) : nlohmann::ordered_json(nullptr);
      repo->upsert(VerdictRecord{d, kAdProvider, cfg_.campaign_id, RecordKind::Ad, p.dump(), ts});
    }
  }
  return ads_count;
}

analytics::AnalysisReport Pipeline::build_report() const {
  require_campaign(cfg_);
  if (!std::filesystem::exists(cfg_.repository / "records.jsonl")) {
    fail(ErrorCode::UnknownCampaign, "no repository at " + cfg_.repository.string());
  }
  auto repo = open_repo(cfg_);
  ads::CompiledLists compiled;
  if (!cfg_.list_files.empty()) compiled = ads::load_lists(cfg_.list_files, cfg_.subdomain_matching);
  analytics::Provenance prov;
  prov.campaign_id = cfg_.campaign_id;
  prov.config_digest = cfg_.digest;
  prov.list_digests = compiled.matcher.source_digests();
  return analytics::analyze(repo, cfg_.campaign_id, compiled.matcher, cfg_.analytics, prov);
}

std::vector<std::filesystem::path> Pipeline::analyze(const std::optional<std::filesystem::path>& out_dir) {
  const auto report = build_report();
  const auto dir = out_dir.value_or(cfg_.out_dir);
  std::vector<std::filesystem::path> written;
  for (auto fmt : {analytics::ReportFormat::Json, analytics::ReportFormat::Csv, analytics::ReportFormat::PlotData}) {
    for (auto& p : analytics::emit_report(report, fmt, dir)) written.push_back(std::move(p));
  }
  return written;
}

}  // namespace admal
