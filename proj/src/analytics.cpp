#include "admal/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <future>

#include "admal/dns_broker.hpp"
#include "admal/error.hpp"
#include "admal/util.hpp"

namespace admal::analytics {
namespace {

using ojson = nlohmann::ordered_json;

std::int64_t pow10(int n) {
  std::int64_t v = 1;
  while (n-- > 0) v *= 10;
  return v;
}

int decimals_of(PercentMode m) { return m == PercentMode::Truncate1 ? 1 : 2; }

const char* mode_name(PercentMode m) { return m == PercentMode::Truncate1 ? "truncate1" : "truncate2"; }

std::string number(double x) { return ojson(x).dump(); }

// Runs fn(i) for i in [0, n) on up to `workers` threads; results keep index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, int workers, Fn fn) {
  std::vector<T> out(n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
  };
  std::vector<std::future<void>> futs;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 0; w < k; ++w) futs.push_back(std::async(std::launch::async, run));
  for (auto& f : futs) f.get();
  return out;
}

std::string provenance_comment(const AnalysisReport& r) {
  return "# campaign_id=" + r.provenance.campaign_id + "; config_digest=" + r.provenance.config_digest + "\n";
}

}  // namespace

std::optional<PercentMode> parse_percent_mode(std::string_view s) {
  if (s == "truncate2") return PercentMode::Truncate2;
  if (s == "truncate1") return PercentMode::Truncate1;
  return std::nullopt;
}

double Percent::value() const { return static_cast<double>(scaled) / static_cast<double>(pow10(decimals)); }

std::string Percent::str() const {
  const auto unit = pow10(decimals);
  std::string frac = std::to_string(scaled % unit);
  frac.insert(0, static_cast<std::size_t>(decimals) - frac.size(), '0');
  return std::to_string(scaled / unit) + "." + frac;
}

Percent percent(std::uint64_t count, std::uint64_t base, PercentMode mode) {
  if (base == 0) fail(ErrorCode::ZeroBase, "percentage base is zero");
  const int dec = decimals_of(mode);
  const unsigned __int128 num = static_cast<unsigned __int128>(count) * static_cast<unsigned __int128>(pow10(2 + dec));
  return Percent{static_cast<std::int64_t>(num / base), dec};
}

BlockedSets blocked_sets(const Repository& repo, std::string_view campaign, int workers) {
  if (!repo.has_campaign(campaign)) fail(ErrorCode::UnknownCampaign, "unknown campaign: " + std::string(campaign));
  const auto providers = repo.providers(campaign);
  struct PerProvider {
    DomainSet blocked;
    std::size_t inconclusive = 0;
    std::size_t verdicts = 0;
  };
  auto per = parallel_map<PerProvider>(providers.size(), workers, [&](std::size_t i) {
    PerProvider pp;
    for (const auto& rec : repo.query(campaign, providers[i], RecordKind::Dns)) {
      ++pp.verdicts;
      const auto c = dns::classification_from_payload(nlohmann::json::parse(rec.payload));
      if (c.verdict == dns::VerdictKind::Blocked) pp.blocked.insert(rec.domain);
      if (c.verdict == dns::VerdictKind::Inconclusive) ++pp.inconclusive;
    }
    return pp;
  });
  BlockedSets out;
  for (std::size_t i = 0; i < providers.size(); ++i) {
    if (per[i].verdicts == 0) continue;
    out.blocked[providers[i]] = std::move(per[i].blocked);
    out.inconclusive[providers[i]] = per[i].inconclusive;
    out.verdicts[providers[i]] = per[i].verdicts;
  }
  return out;
}

Venn3 venn3(const DomainSet& a, const DomainSet& b, const DomainSet& c) {
  Venn3 v;
  for (const auto& x : a) {
    const bool in_b = b.count(x) > 0;
    const bool in_c = c.count(x) > 0;
    if (in_b && in_c) ++v.abc;
    else if (in_b) ++v.ab;
    else if (in_c) ++v.ac;
    else ++v.a_only;
  }
  for (const auto& x : b) {
    if (a.count(x)) continue;
    if (c.count(x)) ++v.bc;
    else ++v.b_only;
  }
  for (const auto& x : c) {
    if (!a.count(x) && !b.count(x)) ++v.c_only;
  }
  v.union_count = v.a_only + v.b_only + v.c_only + v.ab + v.ac + v.bc + v.abc;
  v.total_a = a.size();
  v.total_b = b.size();
  v.total_c = c.size();
  return v;
}

AdShare ad_share(const DomainSet& blocked, const ads::AdMatcher& matcher, PercentMode mode) {
  AdShare s;
  s.share.decimals = decimals_of(mode);
  if (blocked.empty()) {
    s.empty_set = true;
    return s;
  }
  for (const auto& d : blocked) {
    if (matcher.is_ad(d)) ++s.ad_count;
  }
  s.share = percent(s.ad_count, blocked.size(), mode);
  return s;
}

TiStats ti_stats(const std::vector<ti::TiLookupResult>& results, const ads::AdMatcher& matcher,
                 const TiOptions& opts) {
  TiStats s;
  for (const auto& r : results) {
    const auto* rep = std::get_if<ti::TiReport>(&r);
    if (!rep) {
      ++s.no_report;
      continue;
    }
    ++s.with_report;
    if (ti::threat_flag(*rep)) {
      ++s.threat_count;
      if (matcher.is_ad(rep->domain)) ++s.ad_threat_count;
    }
    try {
      const double ratio = ti::agreement_ratio(*rep, opts.denominator);
      s.ratios.push_back(ratio);
      if (ratio == 1.0) ++s.unanimous_threat;
      if (ratio == 0.0) ++s.unanimous_harmless;
    } catch (const Error&) {
      ++s.ratio_undefined;
    }
  }
  switch (opts.base) {
    case ThreatShareBase::WithReport: s.threat_share_base = s.with_report; break;
    case ThreatShareBase::Corpus: s.threat_share_base = s.with_report + s.no_report; break;
    case ThreatShareBase::Fixed: s.threat_share_base = opts.fixed_base; break;
  }
  s.threat_share = s.threat_share_base > 0 ? percent(s.threat_count, s.threat_share_base, opts.threat_share_mode)
                                           : Percent{0, decimals_of(opts.threat_share_mode)};
  s.ad_threat_share = s.threat_count > 0 ? percent(s.ad_threat_count, s.threat_count, opts.ad_threat_share_mode)
                                         : Percent{0, decimals_of(opts.ad_threat_share_mode)};
  return s;
}

std::vector<EcdfPoint> ecdf(std::vector<double> ratios) {
  if (ratios.empty()) fail(ErrorCode::EmptyInput, "ECDF of an empty sample");
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) fail(ErrorCode::InvalidArgument, "ratio outside [0,1]");
  }
  std::sort(ratios.begin(), ratios.end());
  const auto n = static_cast<double>(ratios.size());
  std::vector<EcdfPoint> out;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (i + 1 < ratios.size() && ratios[i + 1] == ratios[i]) continue;
    const auto cum = static_cast<std::uint64_t>(i + 1);
    out.push_back({ratios[i], cum, static_cast<double>(cum) / n});
  }
  return out;
}

AnalysisReport analyze(const Repository& repo, std::string_view campaign, const ads::AdMatcher& matcher,
                       const AnalyzeOptions& opts, Provenance provenance) {
  AnalysisReport report;
  report.provenance = std::move(provenance);
  report.percent_mode = opts.percent_mode;

  auto sets = blocked_sets(repo, campaign, opts.workers);

  if (opts.corpus_size) {
    report.corpus_size = *opts.corpus_size;
  } else if (auto m = repo.read_manifest(campaign, "dns"); m && m->contains("domains")) {
    report.corpus_size = m->at("domains").get<std::uint64_t>();
  } else {
    DomainSet all;
    for (const auto& rec : repo.query(campaign)) all.insert(rec.domain);
    report.corpus_size = all.size();
  }

  std::vector<std::string> order = opts.provider_order;
  for (const auto& [p, _] : sets.blocked) {
    if (std::find(order.begin(), order.end(), p) == order.end()) order.push_back(p);
  }
  static const DomainSet kEmpty;
  auto set_of = [&](const std::string& p) -> const DomainSet& {
    auto it = sets.blocked.find(p);
    return it == sets.blocked.end() ? kEmpty : it->second;
  };

  auto shares = parallel_map<AdShare>(order.size(), opts.workers,
                                      [&](std::size_t i) { return ad_share(set_of(order[i]), matcher, opts.percent_mode); });
  DomainSet blocked_union;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& p = order[i];
    const auto& bs = set_of(p);
    ProviderSummary ps;
    ps.provider = p;
    ps.verdicts = sets.verdicts.count(p) ? sets.verdicts.at(p) : 0;
    ps.blocked = bs.size();
    ps.blocked_pct = report.corpus_size ? percent(ps.blocked, report.corpus_size, opts.percent_mode)
                                        : Percent{0, decimals_of(opts.percent_mode)};
    ps.inconclusive = sets.inconclusive.count(p) ? sets.inconclusive.at(p) : 0;
    ps.ad_blocked = shares[i].ad_count;
    ps.ad_share_pct = shares[i].share;
    ps.ad_share_empty = shares[i].empty_set;
    report.providers.push_back(std::move(ps));
    blocked_union.insert(bs.begin(), bs.end());
  }
  report.blocked_union = blocked_union.size();
  report.blocked_union_pct = report.corpus_size ? percent(report.blocked_union, report.corpus_size, opts.percent_mode)
                                                : Percent{0, decimals_of(opts.percent_mode)};
  if (order.size() >= 3) {
    report.venn_sets = std::vector<std::string>(order.begin(), order.begin() + 3);
    report.venn = venn3(set_of(order[0]), set_of(order[1]), set_of(order[2]));
  }

  const auto ti_records = repo.query(campaign, opts.ti_provider, RecordKind::Ti);
  if (!ti_records.empty()) {
    std::vector<ti::TiLookupResult> results;
    results.reserve(ti_records.size());
    for (const auto& rec : ti_records) {
      results.push_back(ti::result_from_payload(rec.domain, nlohmann::json::parse(rec.payload)));
    }
    auto stats = ti_stats(results, matcher, opts.ti);
    switch (opts.ti.base) {
      case ThreatShareBase::WithReport: report.ti_base_label = "with_report"; break;
      case ThreatShareBase::Corpus: report.ti_base_label = "corpus"; break;
      case ThreatShareBase::Fixed: report.ti_base_label = "fixed"; break;
    }
    report.ti_corpus_base = stats.with_report + stats.no_report;
    if (report.ti_corpus_base) {
      report.threat_share_corpus = percent(stats.threat_count, report.ti_corpus_base, opts.ti.threat_share_mode);
    }
    if (!stats.ratios.empty()) report.ecdf = ecdf(stats.ratios);
    report.ti = std::move(stats);
  }
  return report;
}

std::string report_json(const AnalysisReport& r) {
  ojson j;
  j["schema"] = "admal.analysis/1";
  j["campaign_id"] = r.provenance.campaign_id;
  j["corpus_size"] = r.corpus_size;
  j["percent_mode"] = mode_name(r.percent_mode);
  ojson providers = ojson::array();
  for (const auto& p : r.providers) {
    ojson pj;
    pj["provider"] = p.provider;
    pj["verdicts"] = p.verdicts;
    pj["blocked"] = p.blocked;
    pj["blocked_pct"] = p.blocked_pct.value();
    pj["inconclusive"] = p.inconclusive;
    pj["ad_blocked"] = p.ad_blocked;
    pj["ad_share_pct"] = p.ad_share_pct.value();
    pj["ad_share_empty"] = p.ad_share_empty;
    providers.push_back(std::move(pj));
  }
  j["providers"] = std::move(providers);
  j["blocked_union"] = r.blocked_union;
  j["blocked_union_pct"] = r.blocked_union_pct.value();
  if (r.venn && r.venn_sets) {
    const auto& v = *r.venn;
    const auto& s = *r.venn_sets;
    ojson vj;
    vj["sets"] = s;
    vj["a_only"] = v.a_only;
    vj["b_only"] = v.b_only;
    vj["c_only"] = v.c_only;
    vj["ab"] = v.ab;
    vj["ac"] = v.ac;
    vj["bc"] = v.bc;
    vj["abc"] = v.abc;
    vj["union"] = v.union_count;
    ojson totals;
    totals[s[0]] = v.total_a;
    totals[s[1]] = v.total_b;
    totals[s[2]] = v.total_c;
    vj["totals"] = std::move(totals);
    j["venn"] = std::move(vj);
  } else {
    j["venn"] = nullptr;
  }
  if (r.ti) {
    const auto& t = *r.ti;
    ojson tj;
    tj["with_report"] = t.with_report;
    tj["no_report"] = t.no_report;
    tj["threat_count"] = t.threat_count;
    tj["threat_share_pct"] = t.threat_share.value();
    tj["threat_share_base"] = t.threat_share_base;
    tj["threat_share_base_kind"] = r.ti_base_label;
    tj["threat_share_pct_corpus"] = r.threat_share_corpus ? ojson(r.threat_share_corpus->value()) : ojson(nullptr);
    tj["corpus_base"] = r.ti_corpus_base;
    tj["ad_threat_count"] = t.ad_threat_count;
    tj["ad_threat_share_pct"] = t.ad_threat_share.value();
    tj["unanimous_threat"] = t.unanimous_threat;
    tj["unanimous_harmless"] = t.unanimous_harmless;
    tj["ratio_undefined"] = t.ratio_undefined;
    j["ti"] = std::move(tj);
  } else {
    j["ti"] = nullptr;
  }
  ojson ej = ojson::array();
  for (const auto& p : r.ecdf) {
    ojson pj;
    pj["ratio"] = p.x;
    pj["cumulative_count"] = p.cumulative_count;
    pj["cumulative_fraction"] = p.cumulative_fraction;
    ej.push_back(std::move(pj));
  }
  j["ecdf"] = std::move(ej);
  ojson prov;
  prov["campaign_id"] = r.provenance.campaign_id;
  prov["config_digest"] = r.provenance.config_digest;
  ojson digests = ojson::object();
  for (const auto& [name, d] : r.provenance.list_digests) digests[name] = d;
  prov["list_digests"] = std::move(digests);
  prov["venn_interpretation"] = "exclusive-regions";
  prov["ad_malware_label"] = "candidate ad-malware";
  j["provenance"] = std::move(prov);
  return j.dump(2) + "\n";
}

std::string report_csv(const AnalysisReport& r) {
  std::string out = provenance_comment(r) + "metric,value\n";
  auto row = [&](const std::string& k, const std::string& v) { out += k + "," + v + "\n"; };
  row("corpus_size", std::to_string(r.corpus_size));
  for (const auto& p : r.providers) {
    row(p.provider + ".blocked", std::to_string(p.blocked));
    row(p.provider + ".blocked_pct", p.blocked_pct.str());
    row(p.provider + ".inconclusive", std::to_string(p.inconclusive));
    row(p.provider + ".ad_blocked", std::to_string(p.ad_blocked));
    row(p.provider + ".ad_share_pct", p.ad_share_pct.str());
  }
  row("blocked_union", std::to_string(r.blocked_union));
  row("blocked_union_pct", r.blocked_union_pct.str());
  if (r.venn) row("venn.abc", std::to_string(r.venn->abc));
  if (r.ti) {
    row("ti.with_report", std::to_string(r.ti->with_report));
    row("ti.no_report", std::to_string(r.ti->no_report));
    row("ti.threat_count", std::to_string(r.ti->threat_count));
    row("ti.threat_share_pct", r.ti->threat_share.str());
    row("ti.ad_threat_count", std::to_string(r.ti->ad_threat_count));
    row("ti.ad_threat_share_pct", r.ti->ad_threat_share.str());
    row("ti.unanimous_threat", std::to_string(r.ti->unanimous_threat));
    row("ti.unanimous_harmless", std::to_string(r.ti->unanimous_harmless));
  }
  return out;
}

std::string venn_csv(const AnalysisReport& r) {
  std::string out = provenance_comment(r) + "region,count\n";
  if (!r.venn || !r.venn_sets) return out;
  const auto& v = *r.venn;
  const auto& s = *r.venn_sets;
  auto row = [&](const std::string& k, std::uint64_t n) { out += k + "," + std::to_string(n) + "\n"; };
  row(s[0], v.a_only);
  row(s[1], v.b_only);
  row(s[2], v.c_only);
  row(s[0] + "&" + s[1], v.ab);
  row(s[0] + "&" + s[2], v.ac);
  row(s[1] + "&" + s[2], v.bc);
  row(s[0] + "&" + s[1] + "&" + s[2], v.abc);
  row("union", v.union_count);
  return out;
}

std::string shares_csv(const AnalysisReport& r) {
  std::string out = provenance_comment(r) + "provider,blocked,blocked_pct,ad_count,ad_share_pct\n";
  for (const auto& p : r.providers) {
    out += p.provider + "," + std::to_string(p.blocked) + "," + p.blocked_pct.str() + "," +
           std::to_string(p.ad_blocked) + "," + p.ad_share_pct.str() + "\n";
  }
  return out;
}

std::string ecdf_csv(const AnalysisReport& r) {
  std::string out = provenance_comment(r) + "ratio,cum_fraction\n";
  for (const auto& p : r.ecdf) out += number(p.x) + "," + number(p.cumulative_fraction) + "\n";
  return out;
}

std::vector<std::filesystem::path> emit_report(const AnalysisReport& report, ReportFormat format,
                                               const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& content) {
    write_file_atomic(p, content);
    written.push_back(p);
  };
  switch (format) {
    case ReportFormat::Json: put(dir / "report.json", report_json(report)); break;
    case ReportFormat::Csv: put(dir / "report.csv", report_csv(report)); break;
    case ReportFormat::PlotData:
      put(dir / "plot" / "venn.csv", venn_csv(report));
      put(dir / "plot" / "shares.csv", shares_csv(report));
      put(dir / "plot" / "ecdf.csv", ecdf_csv(report));
      break;
  }
  return written;
}

}  // namespace admal::analytics
