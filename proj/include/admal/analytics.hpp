#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "admal/adlists.hpp"
#include "admal/domain.hpp"
#include "admal/repository.hpp"
#include "admal/ti_client.hpp"
#include "json.hpp"

namespace admal::analytics {

struct BlockedSets {
  std::map<std::string, DomainSet> blocked;            // provider -> Blocked domains
  std::map<std::string, std::size_t> inconclusive;     // provider -> count
  std::map<std::string, std::size_t> verdicts;         // provider -> total dns verdicts
};

// Throws Error{UnknownCampaign} if the campaign has no records at all.
BlockedSets blocked_sets(const Repository& repo, std::string_view campaign, int workers = 1);

// Exclusive-region decomposition of three sets.
struct Venn3 {
  std::uint64_t a_only = 0, b_only = 0, c_only = 0;
  std::uint64_t ab = 0, ac = 0, bc = 0;  // exactly those two
  std::uint64_t abc = 0;
  std::uint64_t union_count = 0;
  std::uint64_t total_a = 0, total_b = 0, total_c = 0;

  friend bool operator==(const Venn3&, const Venn3&) = default;
};

Venn3 venn3(const DomainSet& a, const DomainSet& b, const DomainSet& c);

enum class PercentMode { Truncate2, Truncate1 };

std::optional<PercentMode> parse_percent_mode(std::string_view s);

// A display percentage held as an integer count of 10^-decimals percent.
struct Percent {
  std::int64_t scaled = 0;
  int decimals = 2;

  double value() const;
  std::string str() const;  // "0.28", "8.8"

  friend bool operator==(const Percent&, const Percent&) = default;
};

// floor(count / base * 100 * 10^decimals) / 10^decimals, in exact integer
// arithmetic. Throws Error{ZeroBase}.
Percent percent(std::uint64_t count, std::uint64_t base, PercentMode mode = PercentMode::Truncate2);

struct AdShare {
  std::uint64_t ad_count = 0;
  Percent share;
  bool empty_set = false;
};

AdShare ad_share(const DomainSet& blocked, const ads::AdMatcher& matcher, PercentMode mode = PercentMode::Truncate2);

enum class ThreatShareBase { WithReport, Corpus, Fixed };

struct TiOptions {
  PercentMode threat_share_mode = PercentMode::Truncate1;
  PercentMode ad_threat_share_mode = PercentMode::Truncate2;
  ThreatShareBase base = ThreatShareBase::WithReport;
  std::uint64_t fixed_base = 0;  // for ThreatShareBase::Fixed
  ti::AgreementDenominator denominator = ti::AgreementDenominator::Opinions;
};

struct EcdfPoint {
  double x = 0;
  std::uint64_t cumulative_count = 0;
  double cumulative_fraction = 0;

  friend bool operator==(const EcdfPoint&, const EcdfPoint&) = default;
};

struct TiStats {
  std::uint64_t with_report = 0;
  std::uint64_t no_report = 0;
  std::uint64_t threat_count = 0;
  Percent threat_share;
  std::uint64_t threat_share_base = 0;
  std::uint64_t ad_threat_count = 0;
  Percent ad_threat_share;
  std::uint64_t unanimous_threat = 0;    // ratio == 1
  std::uint64_t unanimous_harmless = 0;  // ratio == 0
  std::uint64_t ratio_undefined = 0;     // no partner opinion
  std::vector<double> ratios;            // defined agreement ratios, input order
};

TiStats ti_stats(const std::vector<ti::TiLookupResult>& results, const ads::AdMatcher& matcher,
                 const TiOptions& opts = {});

// Step points of the empirical CDF: sorted unique x, cumulative count and
// fraction. Throws Error{EmptyInput}; Error{InvalidArgument} for x outside [0,1].
std::vector<EcdfPoint> ecdf(std::vector<double> ratios);

struct ProviderSummary {
  std::string provider;
  std::uint64_t verdicts = 0;
  std::uint64_t blocked = 0;
  Percent blocked_pct;
  std::uint64_t inconclusive = 0;
  std::uint64_t ad_blocked = 0;
  Percent ad_share_pct;
  bool ad_share_empty = false;
};

struct Provenance {
  std::string campaign_id;
  std::map<std::string, std::string> list_digests;
  std::string config_digest;
};

struct AnalysisReport {
  std::uint64_t corpus_size = 0;
  std::vector<ProviderSummary> providers;
  std::optional<std::vector<std::string>> venn_sets;
  std::optional<Venn3> venn;
  std::uint64_t blocked_union = 0;
  Percent blocked_union_pct;
  std::optional<TiStats> ti;
  std::vector<EcdfPoint> ecdf;
  Provenance provenance;
  PercentMode percent_mode = PercentMode::Truncate2;
  std::string ti_base_label;
  std::uint64_t ti_corpus_base = 0;
  std::optional<Percent> threat_share_corpus;
};

struct AnalyzeOptions {
  PercentMode percent_mode = PercentMode::Truncate2;
  TiOptions ti;
  std::vector<std::string> provider_order;  // report order; first three form the Venn
  std::string ti_provider = "ti";
  std::optional<std::uint64_t> corpus_size;  // else from the dns manifest or distinct domains
  int workers = 1;
};

// Pure function of the repository snapshot, matcher and options.
AnalysisReport analyze(const Repository& repo, std::string_view campaign, const ads::AdMatcher& matcher,
                       const AnalyzeOptions& opts, Provenance provenance);

enum class ReportFormat { Json, Csv, PlotData };

std::string report_json(const AnalysisReport& report);
std::string report_csv(const AnalysisReport& report);
std::string venn_csv(const AnalysisReport& report);
std::string shares_csv(const AnalysisReport& report);
std::string ecdf_csv(const AnalysisReport& report);

// Writes report.json / report.csv / plot/{venn,shares,ecdf}.csv under dir;
// returns the written paths. Throws Error{Io}.
std::vector<std::filesystem::path> emit_report(const AnalysisReport& report, ReportFormat format,
                                               const std::filesystem::path& dir);

}  // namespace admal::analytics
