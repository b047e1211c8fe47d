#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "admal/analytics.hpp"
#include "admal/error.hpp"
#include "support.hpp"

using namespace admal;
using namespace admal::analytics;
using dns::SignatureKind;
using dns::VerdictKind;

namespace {

// Long division to `decimals` digits after the point, truncating.
std::string percent_oracle(std::uint64_t count, std::uint64_t base, int decimals) {
  unsigned __int128 num = static_cast<unsigned __int128>(count) * 100;
  auto whole = static_cast<std::uint64_t>(num / base);
  unsigned __int128 rem = num % base;
  std::string out = std::to_string(whole) + ".";
  for (int i = 0; i < decimals; ++i) {
    rem *= 10;
    out += static_cast<char>('0' + static_cast<int>(rem / base));
    rem %= base;
  }
  return out;
}

DomainSet make_set(std::initializer_list<const char*> names) {
  DomainSet s;
  for (const char* n : names) s.insert(Domain::parse(n));
  return s;
}

ti::TiReport rep(const std::string& d, std::uint64_t h, std::uint64_t u, std::uint64_t s, std::uint64_t m) {
  ti::TiReport r{Domain::parse(d)};
  r.harmless = h;
  r.undetected = u;
  r.suspicious = s;
  r.malicious = m;
  return r;
}

ads::AdMatcher matcher_for(const std::string& list) { return ads::compile(ads::parse_list(list).entries); }

}  // namespace

TEST(Percent, PublishedFigures) {
  EXPECT_EQ(percent(3395, 1206803).str(), "0.28");
  EXPECT_EQ(percent(472, 1206803).str(), "0.03");
  EXPECT_EQ(percent(2229, 1206803).str(), "0.18");
  EXPECT_EQ(percent(5784, 1206803).str(), "0.47");
  EXPECT_EQ(percent(72, 2229).str(), "3.23");
  EXPECT_EQ(percent(7, 472).str(), "1.48");
  EXPECT_EQ(percent(94662, 1070000, PercentMode::Truncate1).str(), "8.8");
  EXPECT_EQ(percent(673, 94662).str(), "0.71");
  EXPECT_DOUBLE_EQ(percent(72, 2229).value(), 3.23);
}

TEST(Percent, EdgeCases) {
  EXPECT_EQ(percent(0, 5).str(), "0.00");
  EXPECT_EQ(percent(5, 5).str(), "100.00");
  EXPECT_EQ(percent(1, 3, PercentMode::Truncate1).str(), "33.3");
  EXPECT_EQ(percent(2, 3).str(), "66.66");  // truncated, not rounded
  try {
    percent(1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroBase);
  }
  EXPECT_EQ(parse_percent_mode("truncate1"), PercentMode::Truncate1);
  EXPECT_FALSE(parse_percent_mode("round"));
}

TEST(Percent, MatchesLongDivision) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20000; ++i) {
    const std::uint64_t base = 1 + rng() % (i % 2 ? 2000000 : 1000);
    const std::uint64_t count = rng() % (base + 1);
    for (auto [mode, d] : {std::pair{PercentMode::Truncate2, 2}, std::pair{PercentMode::Truncate1, 1}}) {
      auto p = percent(count, base, mode);
      ASSERT_EQ(p.str(), percent_oracle(count, base, d)) << count << "/" << base;
      const double exact = 100.0 * static_cast<double>(count) / static_cast<double>(base);
      EXPECT_LE(p.value(), exact + 1e-9);
      EXPECT_GT(p.value() + std::pow(10.0, -d), exact - 1e-9);
    }
  }
}

TEST(Venn, PublishedRegions) {
  // Region sizes from the three published set sizes; the ids are synthetic.
  struct Region {
    int count;
    bool q9, cisco, cf;
  };
  const Region regions[] = {{3130, 1, 0, 0}, {397, 0, 1, 0}, {1952, 0, 0, 1}, {28, 1, 1, 0},
                            {230, 1, 0, 1},  {40, 0, 1, 1},  {7, 1, 1, 1}};
  DomainSet q9, cisco, cf;
  int n = 0;
  for (const auto& r : regions) {
    for (int i = 0; i < r.count; ++i) {
      auto d = Domain::parse("d" + std::to_string(n++) + ".test");
      if (r.q9) q9.insert(d);
      if (r.cisco) cisco.insert(d);
      if (r.cf) cf.insert(d);
    }
  }
  EXPECT_EQ(q9.size(), 3395u);
  EXPECT_EQ(cisco.size(), 472u);
  EXPECT_EQ(cf.size(), 2229u);
  auto v = venn3(q9, cisco, cf);
  EXPECT_EQ(v.a_only, 3130u);
  EXPECT_EQ(v.ab, 28u);
  EXPECT_EQ(v.ac, 230u);
  EXPECT_EQ(v.bc, 40u);
  EXPECT_EQ(v.abc, 7u);
  EXPECT_EQ(v.union_count, 5784u);
}

TEST(Venn, MatchesBruteForce) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 300; ++t) {
    const int universe = 1 + static_cast<int>(rng() % 100);
    DomainSet sets[3];
    std::uint64_t regions[8] = {};
    for (int i = 0; i < universe; ++i) {
      const int mask = static_cast<int>(rng() % 8);
      auto d = Domain::parse("u" + std::to_string(i) + ".test");
      for (int k = 0; k < 3; ++k) {
        if (mask & (1 << k)) sets[k].insert(d);
      }
      ++regions[mask];
    }
    auto v = venn3(sets[0], sets[1], sets[2]);
    EXPECT_EQ(v.a_only, regions[1]);
    EXPECT_EQ(v.b_only, regions[2]);
    EXPECT_EQ(v.c_only, regions[4]);
    EXPECT_EQ(v.ab, regions[3]);
    EXPECT_EQ(v.ac, regions[5]);
    EXPECT_EQ(v.bc, regions[6]);
    EXPECT_EQ(v.abc, regions[7]);
    EXPECT_EQ(v.union_count, universe - regions[0]);
    EXPECT_EQ(v.total_a + v.total_b + v.total_c,
              v.a_only + v.b_only + v.c_only + 2 * (v.ab + v.ac + v.bc) + 3 * v.abc);
  }
}

TEST(AdShare, CountsAndEmptySet) {
  auto m = matcher_for("||ads.test^\n");
  auto s = ad_share(make_set({"x.ads.test", "ads.test", "clean.test", "other.test"}), m);
  EXPECT_EQ(s.ad_count, 2u);
  EXPECT_EQ(s.share.str(), "50.00");
  EXPECT_FALSE(s.empty_set);
  auto e = ad_share({}, m);
  EXPECT_TRUE(e.empty_set);
  EXPECT_EQ(e.ad_count, 0u);
}

TEST(Ecdf, Examples) {
  auto pts = ecdf({0.0, 1.0, 0.5, 0.0});
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0], (EcdfPoint{0.0, 2, 0.5}));
  EXPECT_EQ(pts[1], (EcdfPoint{0.5, 3, 0.75}));
  EXPECT_EQ(pts[2], (EcdfPoint{1.0, 4, 1.0}));
  try {
    ecdf({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  EXPECT_THROW(ecdf({0.2, 1.5}), Error);
  EXPECT_THROW(ecdf({std::nan("")}), Error);
}

TEST(Ecdf, MatchesSortAndCount) {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> xs(1 + rng() % 300);
    for (auto& x : xs) x = static_cast<double>(rng() % 11) / 10.0;
    auto pts = ecdf(xs);
    double prev_x = -1;
    std::uint64_t prev_c = 0;
    for (const auto& p : pts) {
      const auto below = static_cast<std::uint64_t>(std::count_if(xs.begin(), xs.end(), [&](double v) { return v <= p.x; }));
      EXPECT_EQ(p.cumulative_count, below);
      EXPECT_DOUBLE_EQ(p.cumulative_fraction, static_cast<double>(below) / static_cast<double>(xs.size()));
      EXPECT_GT(p.x, prev_x);
      EXPECT_GT(p.cumulative_count, prev_c);
      prev_x = p.x;
      prev_c = p.cumulative_count;
    }
    EXPECT_EQ(pts.back().cumulative_count, xs.size());
    EXPECT_DOUBLE_EQ(pts.back().cumulative_fraction, 1.0);
  }
}

TEST(TiStats, SmallSample) {
  auto m = matcher_for("||ads.test^\n");
  std::vector<ti::TiLookupResult> rs = {
      rep("a.ads.test", 0, 5, 0, 7),  // unanimous threat, ad
      rep("b.test", 3, 0, 1, 0),      // split
      rep("c.test", 9, 1, 0, 0),      // unanimous harmless
      rep("d.test", 0, 4, 0, 0),      // no opinion
      ti::NoReport{Domain::parse("e.test")},
  };
  auto s = ti_stats(rs, m);
  EXPECT_EQ(s.with_report, 4u);
  EXPECT_EQ(s.no_report, 1u);
  EXPECT_EQ(s.threat_count, 2u);
  EXPECT_EQ(s.ad_threat_count, 1u);
  EXPECT_EQ(s.threat_share.str(), "50.0");
  EXPECT_EQ(s.ad_threat_share.str(), "50.00");
  EXPECT_EQ(s.unanimous_threat, 1u);
  EXPECT_EQ(s.unanimous_harmless, 1u);
  EXPECT_EQ(s.ratio_undefined, 1u);
  EXPECT_EQ(s.ratios, (std::vector<double>{1.0, 0.25, 0.0}));

  TiOptions corpus;
  corpus.base = ThreatShareBase::Corpus;
  EXPECT_EQ(ti_stats(rs, m, corpus).threat_share.str(), "40.0");
  TiOptions fixed;
  fixed.base = ThreatShareBase::Fixed;
  fixed.fixed_base = 1000;
  EXPECT_EQ(ti_stats(rs, m, fixed).threat_share.str(), "0.2");
  TiOptions all;
  all.denominator = ti::AgreementDenominator::AllPartners;
  EXPECT_EQ(ti_stats(rs, m, all).ratio_undefined, 0u);
}

namespace {

void seed_campaign(Repository& repo) {
  using testsupport::dns_record;
  for (const char* d : {"a.test", "b.test", "x.ads.test"}) repo.upsert(dns_record(d, "quad9", "c", VerdictKind::Blocked));
  for (const char* d : {"b.test", "c.test"}) {
    repo.upsert(dns_record(d, "cisco", "c", VerdictKind::Blocked, SignatureKind::SinkholeA));
  }
  repo.upsert(dns_record("a.test", "cisco", "c", VerdictKind::Inconclusive));
  repo.upsert(dns_record("x.ads.test", "cloudflare", "c", VerdictKind::Blocked, SignatureKind::SinkholeA));
  repo.upsert(dns_record("c.test", "cloudflare", "c", VerdictKind::NotBlocked));
  repo.upsert(testsupport::ti_record(rep("x.ads.test", 0, 3, 0, 4), "ti", "c"));
  repo.upsert(testsupport::ti_record(rep("a.test", 5, 0, 0, 0), "ti", "c"));
  repo.upsert(testsupport::ti_record(ti::NoReport{Domain::parse("b.test")}, "ti", "c"));
}

AnalyzeOptions options(int workers = 1) {
  AnalyzeOptions o;
  o.provider_order = {"quad9", "cisco", "cloudflare"};
  o.workers = workers;
  return o;
}

}  // namespace

TEST(BlockedSets, FromRepository) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  seed_campaign(repo);
  auto s = blocked_sets(repo, "c");
  EXPECT_EQ(s.blocked["quad9"].size(), 3u);
  EXPECT_EQ(s.blocked["cisco"].size(), 2u);
  EXPECT_EQ(s.inconclusive["cisco"], 1u);
  EXPECT_EQ(s.verdicts["cloudflare"], 2u);
  try {
    blocked_sets(repo, "missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownCampaign);
  }
}

TEST(Analyze, ReportContents) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  seed_campaign(repo);
  nlohmann::ordered_json manifest;
  manifest["domains"] = 1000;
  repo.write_manifest("c", "dns", manifest);
  auto m = matcher_for("||ads.test^\n");
  auto r = analyze(repo, "c", m, options(), {"c", {{"l", "sha256:00"}}, "sha256:cfg"});
  EXPECT_EQ(r.corpus_size, 1000u);
  ASSERT_EQ(r.providers.size(), 3u);
  EXPECT_EQ(r.providers[0].provider, "quad9");
  EXPECT_EQ(r.providers[0].blocked_pct.str(), "0.30");
  EXPECT_EQ(r.providers[0].ad_blocked, 1u);
  EXPECT_EQ(r.providers[0].ad_share_pct.str(), "33.33");
  EXPECT_EQ(r.providers[2].ad_share_pct.str(), "100.00");
  ASSERT_TRUE(r.venn);
  EXPECT_EQ(r.venn->abc, 0u);
  EXPECT_EQ(r.venn->ab, 1u);  // b.test
  EXPECT_EQ(r.venn->ac, 1u);  // x.ads.test
  EXPECT_EQ(r.venn->b_only, 1u);
  EXPECT_EQ(r.blocked_union, 4u);
  ASSERT_TRUE(r.ti);
  EXPECT_EQ(r.ti->threat_count, 1u);
  EXPECT_EQ(r.ti->ad_threat_count, 1u);
  EXPECT_EQ(r.ecdf.size(), 2u);

  auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["schema"], "admal.analysis/1");
  EXPECT_EQ(j["campaign_id"], "c");
  EXPECT_EQ(j["venn"]["union"], 4);
  const auto ecdf_text = ecdf_csv(r);
  EXPECT_EQ(ecdf_text.rfind("# campaign_id=c; config_digest=sha256:cfg", 0), 0u) << ecdf_text;
  EXPECT_NE(ecdf_text.find("\nratio,cum_fraction\n"), std::string::npos);
  EXPECT_EQ(venn_csv(r).rfind("# campaign_id=c", 0), 0u);
  EXPECT_EQ(shares_csv(r).rfind("# campaign_id=c", 0), 0u);
  EXPECT_EQ(report_csv(r).rfind("# campaign_id=c", 0), 0u);
}

TEST(Analyze, CorpusSizeFallsBackToDistinctDomains) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  seed_campaign(repo);
  auto r = analyze(repo, "c", matcher_for(""), options(), {"c", {}, ""});
  EXPECT_EQ(r.corpus_size, 4u);
  auto o = options();
  o.corpus_size = 50;
  EXPECT_EQ(analyze(repo, "c", matcher_for(""), o, {"c", {}, ""}).corpus_size, 50u);
}

TEST(Analyze, DeterministicAcrossWorkers) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path());
  std::mt19937_64 rng(31);
  const char* providers[] = {"quad9", "cisco", "cloudflare"};
  for (int i = 0; i < 3000; ++i) {
    const auto d = testsupport::random_domain(rng, 3);
    const auto verdict = static_cast<VerdictKind>(rng() % 3);
    repo.upsert(testsupport::dns_record(d, providers[rng() % 3], "c", verdict));
  }
  auto m = matcher_for("||a.ta^\n||b.tb^\n");
  std::string first;
  for (int w : {1, 2, 4, 8}) {
    for (int rep = 0; rep < 2; ++rep) {
      testsupport::TempDir out;
      auto r = analyze(repo, "c", m, options(w), {"c", {}, "sha256:x"});
      std::string all;
      for (auto fmt : {ReportFormat::Json, ReportFormat::Csv, ReportFormat::PlotData}) {
        for (const auto& p : emit_report(r, fmt, out.path())) all += testsupport::read_text(p);
      }
      if (first.empty()) first = all;
      EXPECT_EQ(all, first) << "workers=" << w;
    }
  }
}

TEST(Emit, WritesExpectedFiles) {
  testsupport::TempDir dir;
  auto repo = Repository::open(dir.path() / "repo");
  seed_campaign(repo);
  auto r = analyze(repo, "c", matcher_for(""), options(), {"c", {}, ""});
  auto json = emit_report(r, ReportFormat::Json, dir.path() / "out");
  ASSERT_EQ(json.size(), 1u);
  EXPECT_EQ(json[0].filename(), "report.json");
  auto plot = emit_report(r, ReportFormat::PlotData, dir.path() / "out");
  EXPECT_EQ(plot.size(), 3u);
  for (const auto& p : plot) EXPECT_TRUE(std::filesystem::exists(p)) << p;
}
