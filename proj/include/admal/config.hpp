#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "admal/adlists.hpp"
#include "admal/analytics.hpp"
#include "admal/dns_broker.hpp"
#include "admal/mockdns.hpp"
#include "admal/repository.hpp"
#include "admal/ti_client.hpp"

namespace admal {

struct TiConfig {
  enum class Mode { None, Fixture, Live } mode = Mode::None;
  std::string provider_id = "ti";
  std::filesystem::path fixture_path;
  ti::LiveConfig live;
  std::optional<std::filesystem::path> cache_path;
};

// Environment variable holding the live TI API key; never read from files.
inline constexpr const char* kTiApiKeyEnv = "ADMAL_TI_API_KEY";

struct PipelineConfig {
  std::filesystem::path config_path;
  std::string campaign_id;

  std::vector<std::filesystem::path> url_lists;
  std::vector<std::filesystem::path> captures;
  bool collapse_registrable = false;
  std::optional<std::filesystem::path> public_suffix_list;
  std::filesystem::path corpus_path;

  std::filesystem::path repository;
  Durability durability = Durability::Flush;
  std::filesystem::path out_dir;

  std::vector<dns::ResolverProfile> resolvers;
  dns::CampaignLimits limits;

  TiConfig ti;

  std::vector<std::filesystem::path> list_files;
  ads::SubdomainMatching subdomain_matching = ads::SubdomainMatching::Strict;

  analytics::AnalyzeOptions analytics;

  std::optional<mockdns::FarmConfig> mock_farm;

  // sha256 over the canonical (sorted-key) JSON of the config document.
  std::string digest;
};

// Parses and validates a pipeline config file. Relative paths resolve
// against the config file's directory. Throws Error{Config}.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);

}  // namespace admal
