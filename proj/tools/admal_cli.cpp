// admal command-line front end. Talks to the library only through admal.h.
#include <admal/admal.h>

#include <csignal>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

volatile std::sig_atomic_t g_signalled = 0;
admal_pipeline* volatile g_pipeline = nullptr;

extern "C" void on_signal(int) {
  g_signalled = 1;
  if (g_pipeline) admal_pipeline_request_stop(g_pipeline);
  // A second interrupt kills the process the usual way.
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
}

int exit_code(admal_status s) {
  switch (s) {
    case ADMAL_OK:
      return kExitOk;
    case ADMAL_E_CONFIG:
    case ADMAL_E_INVALID_ARGUMENT:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

int report_failure(const char* what, admal_status s) {
  std::fprintf(stderr, "admal: %s failed (%s): %s\n", what, admal_status_name(s), admal_last_error());
  return exit_code(s);
}

struct Common {
  std::string config;
  std::string campaign;
  std::string out;
  std::string domains;
  std::vector<std::string> lists;
  int max_inflight = 0;
  double qps = 0;
};

// Runs one pipeline step with the handle registered for SIGINT.
template <typename F>
int with_pipeline(const Common& c, const char* what, F&& step) {
  admal_pipeline* p = nullptr;
  auto s = admal_pipeline_open(c.config.c_str(), &p);
  if (s != ADMAL_OK) return report_failure("loading config", s);
  if (!c.campaign.empty() && (s = admal_pipeline_set_campaign(p, c.campaign.c_str())) != ADMAL_OK) {
    admal_pipeline_close(p);
    return report_failure("setting campaign", s);
  }
  if (!c.out.empty()) admal_pipeline_set_out_dir(p, c.out.c_str());
  if (c.max_inflight > 0 || c.qps > 0) admal_pipeline_set_limits(p, c.max_inflight, c.qps);
  if (!c.lists.empty()) {
    std::vector<const char*> paths;
    for (const auto& l : c.lists) paths.push_back(l.c_str());
    admal_pipeline_set_lists(p, paths.data(), paths.size());
  }

  g_pipeline = p;
  if (g_signalled) admal_pipeline_request_stop(p);
  char* summary = nullptr;
  s = step(p, &summary);
  g_pipeline = nullptr;
  admal_pipeline_close(p);
  if (s != ADMAL_OK) return report_failure(what, s);
  if (summary) {
    std::fprintf(stderr, "%s\n", summary);
    admal_free_string(summary);
  }
  if (g_signalled) {
    std::fprintf(stderr, "admal: %s interrupted; rerun to resume\n", what);
    return kExitRuntime;
  }
  return kExitOk;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

int serve_mock(const std::string& farm_path) {
  std::ifstream in(farm_path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "admal: cannot read %s\n", farm_path.c_str());
    return kExitUsage;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  std::string base = ".";
  if (auto slash = farm_path.find_last_of('/'); slash != std::string::npos) base = farm_path.substr(0, slash);

  admal_mockfarm* farm = nullptr;
  auto s = admal_mockfarm_start(ss.str().c_str(), base.c_str(), &farm);
  if (s != ADMAL_OK) return report_failure("starting mock farm", s);
  char* manifest = nullptr;
  if (admal_mockfarm_manifest(farm, &manifest) == ADMAL_OK) {
    std::printf("%s\n", manifest);
    std::fflush(stdout);
    admal_free_string(manifest);
  }
  while (!g_signalled) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  admal_mockfarm_stop(farm);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measure ad and malware blocking by filtering DNS resolvers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", admal_version());
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug|info|warn|error")
      ->check(CLI::IsMember({"debug", "info", "warn", "error"}));

  Common c;
  auto add_common = [&](CLI::App* sub, bool campaign) {
    sub->add_option("-c,--config", c.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    if (campaign) sub->add_option("--campaign", c.campaign, "Campaign id (overrides config)");
  };

  auto* ingest = app.add_subcommand("ingest", "Extract and deduplicate domains from URL lists and captures");
  add_common(ingest, false);

  auto* dns = app.add_subcommand("dns-scan", "Query every domain against every configured resolver");
  add_common(dns, true);
  dns->add_option("--domains", c.domains, "Domain list (default: ingested corpus)")->check(CLI::ExistingFile);
  dns->add_option("--max-inflight", c.max_inflight, "Concurrent queries")->check(CLI::PositiveNumber);
  dns->add_option("--qps", c.qps, "Queries per second per provider")->check(CLI::PositiveNumber);

  auto* ti = app.add_subcommand("ti-fetch", "Fetch threat-intelligence reports");
  add_common(ti, true);
  ti->add_option("--domains", c.domains, "Domain list (default: ingested corpus)")->check(CLI::ExistingFile);

  std::string ads_out = "-";
  bool no_record = false;
  auto* ads = app.add_subcommand("ads-classify", "Classify domains against ad block lists");
  add_common(ads, true);
  ads->add_option("--domains", c.domains, "Domain list (default: ingested corpus)")->check(CLI::ExistingFile);
  ads->add_option("-o,--output", ads_out, "JSONL output file, - for stdout");
  ads->add_option("--lists", c.lists, "Ad list files (override config)")->check(CLI::ExistingFile);
  ads->add_flag("--no-record", no_record, "Do not store ad records in the repository");

  auto* analyze = app.add_subcommand("analyze", "Compute overlaps, shares and agreement from stored verdicts");
  add_common(analyze, true);
  analyze->add_option("--out", c.out, "Output directory (overrides config)");

  auto* run_all = app.add_subcommand("run-all", "ingest, dns-scan, ti-fetch, ads-classify and analyze");
  add_common(run_all, true);
  run_all->add_option("--out", c.out, "Output directory (overrides config)");
  run_all->add_option("--max-inflight", c.max_inflight, "Concurrent queries")->check(CLI::PositiveNumber);
  run_all->add_option("--qps", c.qps, "Queries per second per provider")->check(CLI::PositiveNumber);

  std::string farm_path;
  auto* mock = app.add_subcommand("mock-dns", "Serve mock filtering resolvers until interrupted");
  mock->add_option("--farm", farm_path, "Farm config (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  admal_set_log_level(log_level == "debug" ? 0 : log_level == "info" ? 1 : log_level == "warn" ? 2 : 3);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  if (*ingest) {
    return with_pipeline(c, "ingest", [](admal_pipeline* p, char** s) { return admal_pipeline_ingest(p, s); });
  }
  if (*dns) {
    return with_pipeline(c, "dns-scan", [&](admal_pipeline* p, char** s) {
      return admal_pipeline_dns_scan(p, opt(c.domains), s);
    });
  }
  if (*ti) {
    return with_pipeline(c, "ti-fetch", [&](admal_pipeline* p, char** s) {
      return admal_pipeline_ti_fetch(p, opt(c.domains), s);
    });
  }
  if (*ads) {
    return with_pipeline(c, "ads-classify", [&](admal_pipeline* p, char** s) {
      return admal_pipeline_ads_classify(p, opt(c.domains), ads_out.c_str(), no_record ? 0 : 1, s);
    });
  }
  if (*analyze) {
    return with_pipeline(c, "analyze", [](admal_pipeline* p, char** s) { return admal_pipeline_analyze(p, s); });
  }
  if (*run_all) {
    return with_pipeline(c, "run-all", [](admal_pipeline* p, char** s) { return admal_pipeline_run_all(p, s); });
  }
  if (*mock) return serve_mock(farm_path);
  return kExitUsage;
}
