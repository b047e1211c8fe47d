#include "support.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace testsupport {

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  for (int i = 0; i < 100; ++i) {
    auto candidate = std::filesystem::temp_directory_path() /
                     ("admal-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" +
                      std::to_string(rd() % 100000));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(ADMAL_TEST_DATA) / name; }

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("read failed: " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string random_label(std::mt19937_64& rng, int max_len, const std::string& alphabet) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += alphabet[pick(rng)];
  if (s.front() == '-') s.front() = 'a';
  if (s.back() == '-') s.back() = 'z';
  return s;
}

std::string random_domain(std::mt19937_64& rng, int max_labels, const std::string& alphabet) {
  std::uniform_int_distribution<int> labels(1, max_labels);
  const int n = labels(rng);
  std::string d;
  for (int i = 0; i < n; ++i) {
    if (i) d += '.';
    d += random_label(rng, 6, alphabet);
  }
  // Keep the final label alphabetic so it never reads as an IP literal.
  d += ".t" + random_label(rng, 2, "abc");
  return d;
}

admal::VerdictRecord dns_record(const std::string& domain, const std::string& provider, const std::string& campaign,
                                admal::dns::VerdictKind verdict, admal::dns::SignatureKind sig) {
  using namespace admal;
  dns::ProviderVerdict v{Domain::parse(domain), provider, "A", {}, {}, std::nullopt, "2023-12-17T00:00:00.000Z"};
  v.classification.verdict = verdict;
  if (verdict == dns::VerdictKind::Blocked) v.classification.signature = sig;
  if (verdict == dns::VerdictKind::Inconclusive) v.classification.reason = "timeout";
  return VerdictRecord{v.domain, provider, campaign, RecordKind::Dns, dns::payload_json(v).dump(),
                       "2023-12-17T00:00:00.000Z"};
}

admal::VerdictRecord ti_record(const admal::ti::TiLookupResult& r, const std::string& provider,
                               const std::string& campaign) {
  using namespace admal;
  return VerdictRecord{ti::domain_of(r), provider, campaign, RecordKind::Ti, ti::payload_json(r).dump(),
                       "2023-12-17T00:00:00.000Z"};
}

int run_process(const std::vector<std::string>& argv, const std::filesystem::path& stdout_path,
                const std::filesystem::path& stderr_path) {
  const pid_t pid = ::fork();
  if (pid < 0) return -1;
  if (pid == 0) {
    auto redirect = [](const std::filesystem::path& p, int fd) {
      const int out = ::open(p.empty() ? "/dev/null" : p.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      if (out >= 0) {
        ::dup2(out, fd);
        ::close(out);
      }
    };
    redirect(stdout_path, STDOUT_FILENO);
    redirect(stderr_path, STDERR_FILENO);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execv(args[0], args.data());
    ::_exit(127);
  }
  int status = 0;
  if (::waitpid(pid, &status, 0) != pid) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testsupport
