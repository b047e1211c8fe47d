#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "admal/dns_broker.hpp"
#include "admal/domain.hpp"
#include "admal/repository.hpp"
#include "admal/ti_client.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path data_path(const std::string& name);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

// Random lowercase LDH label of length [1, max_len].
std::string random_label(std::mt19937_64& rng, int max_len = 8, const std::string& alphabet = "abcdefghij-0");
// 1..max_labels random labels joined with dots, always valid.
std::string random_domain(std::mt19937_64& rng, int max_labels = 4, const std::string& alphabet = "abcdefghij0");

// A stored dns verdict with the given classification.
admal::VerdictRecord dns_record(const std::string& domain, const std::string& provider, const std::string& campaign,
                                admal::dns::VerdictKind verdict,
                                admal::dns::SignatureKind sig = admal::dns::SignatureKind::Nxdomain);

admal::VerdictRecord ti_record(const admal::ti::TiLookupResult& r, const std::string& provider,
                               const std::string& campaign);

// Runs argv[0] with the rest as arguments; returns the exit status or -1.
int run_process(const std::vector<std::string>& argv, const std::filesystem::path& stdout_path = {},
                const std::filesystem::path& stderr_path = {});

}  // namespace testsupport
