#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace admal {

// A normalized hostname: lowercase ASCII, punycode for IDN labels, no port,
// no trailing dot, never an IP literal. Only constructible through parse().
class Domain {
 public:
  // Normalizes a bare host. Throws Error{IpLiteral|InvalidHost}.
  static Domain parse(std::string_view host);
  // Skips normalization; only for names already produced by parse().
  static Domain from_normalized(std::string name) { return Domain(std::move(name)); }

  const std::string& str() const noexcept { return name_; }

  bool is_subdomain_of(const Domain& parent) const;

  friend bool operator==(const Domain&, const Domain&) = default;
  friend auto operator<=>(const Domain&, const Domain&) = default;

 private:
  explicit Domain(std::string name) : name_(std::move(name)) {}
  std::string name_;
};

struct DomainHash {
  std::size_t operator()(const Domain& d) const noexcept {
    return std::hash<std::string>{}(d.str());
  }
};

using DomainSet = std::unordered_set<Domain, DomainHash>;

bool is_ip_literal(std::string_view host);

struct RequestRecord {
  std::string url;
  std::optional<std::string> source_page;
  std::optional<std::string> observed_at;
};

struct Reject {
  std::size_t line_no = 0;  // 1-based; entry index for captures
  std::string text;
  std::string reason;
};

struct ParsedRecords {
  std::vector<RequestRecord> records;
  std::vector<Reject> rejects;
};

// Host component of an absolute http/https URL, still raw (not normalized).
std::optional<std::string> url_host(std::string_view url);

ParsedRecords parse_url_list(std::string_view text);

// Throws Error{Schema} naming the offending JSON path, e.g. "entries[0].url".
std::vector<RequestRecord> parse_capture(std::string_view json_text);

// Throws Error{IpLiteral|InvalidHost}.
Domain extract_domain(std::string_view url);

// Public-suffix rules (publicsuffix.org format). An empty rule set behaves
// as the implicit "*" rule, i.e. registrable = last two labels.
class PublicSuffixList {
 public:
  PublicSuffixList() = default;
  static PublicSuffixList parse(std::string_view text);

  Domain registrable(const Domain& d) const;

 private:
  std::unordered_set<std::string> rules_;
  std::unordered_set<std::string> wildcards_;   // "*.ck" stored as "ck"
  std::unordered_set<std::string> exceptions_;  // "!www.ck" stored as "www.ck"
};

struct DedupeOptions {
  const PublicSuffixList* collapse_to_registrable = nullptr;
};

struct Corpus {
  std::vector<Domain> domains;  // first-seen order, no duplicates
  std::size_t ip_literal_rejects = 0;
  std::size_t invalid_host_rejects = 0;
};

Corpus dedupe(const std::vector<RequestRecord>& records, const DedupeOptions& opts = {});

// One domain per line; the format written by the ingest step.
std::vector<Domain> read_corpus(std::string_view text);
std::string render_corpus(const std::vector<Domain>& domains);

}  // namespace admal
