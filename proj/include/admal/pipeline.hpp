#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "admal/analytics.hpp"
#include "admal/config.hpp"
#include "admal/dns_broker.hpp"
#include "admal/domain.hpp"

namespace admal {

struct IngestSummary {
  std::size_t records = 0;
  std::size_t line_rejects = 0;
  std::size_t ip_literal_rejects = 0;
  std::size_t invalid_host_rejects = 0;
  std::size_t domains = 0;
};

struct TiFetchSummary {
  std::size_t fetched = 0;
  std::size_t skipped = 0;
  std::size_t with_report = 0;
  std::size_t no_report = 0;
  std::size_t unfetched = 0;
  bool interrupted = false;
};

// Drives one campaign through ingest -> dns-scan -> ti-fetch -> analyze.
// Every step is resumable: work already stored for the campaign is skipped.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg, const std::atomic<bool>* stop = nullptr, Clock clock = system_clock())
      : cfg_(std::move(cfg)), stop_(stop), clock_(std::move(clock)) {}

  const PipelineConfig& config() const { return cfg_; }

  // Reads url lists / captures (or `inputs` when given) and writes the
  // deduplicated corpus to config().corpus_path.
  IngestSummary ingest(const std::vector<std::filesystem::path>& url_lists = {},
                       const std::vector<std::filesystem::path>& captures = {});

  dns::CampaignStats dns_scan(const std::optional<std::filesystem::path>& domains = std::nullopt);

  TiFetchSummary ti_fetch(const std::optional<std::filesystem::path>& domains = std::nullopt);

  // Writes one JSONL line per domain to out and, when record is set, an "ad"
  // record per domain into the repository. Returns the number of ad domains.
  std::size_t ads_classify(std::ostream& out, const std::vector<std::filesystem::path>& lists = {},
                           const std::optional<std::filesystem::path>& domains = std::nullopt, bool record = true);

  // Never touches the network. Returns the written artifact paths.
  std::vector<std::filesystem::path> analyze(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

  analytics::AnalysisReport build_report() const;

 private:
  std::vector<Domain> load_domains(const std::optional<std::filesystem::path>& override_path) const;
  bool stopping() const { return stop_ && stop_->load(); }

  PipelineConfig cfg_;
  const std::atomic<bool>* stop_;
  Clock clock_;
};

}  // namespace admal
