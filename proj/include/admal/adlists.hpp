#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "admal/domain.hpp"
#include "admal/repository.hpp"

namespace admal::ads {

enum class ListFormat { Auto, Hosts, Plain, Adblock };

std::optional<ListFormat> parse_list_format(std::string_view s);

struct FilterEntry {
  Domain pattern;
  bool match_subdomains = false;
  std::string source_list;
  std::size_t line_no = 0;
};

struct ParsedList {
  std::vector<FilterEntry> entries;
  std::vector<Reject> rejects;
};

// Hosts lines ("0.0.0.0 d", "127.0.0.1 d") and plain domain lines match
// exactly; "||d^" matches d and its subdomains. Comments, cosmetic filters,
// exception rules and rules with paths or options are rejected with a reason.
ParsedList parse_list(std::string_view text, ListFormat hint = ListFormat::Auto,
                      std::string_view source_name = "");

enum class SubdomainMatching {
  Strict,  // per-entry semantics
  Always,  // every entry also covers its subdomains
};

std::optional<SubdomainMatching> parse_subdomain_matching(std::string_view s);

struct AdMatch {
  std::string matched_entry;
  std::string source_list;
  bool via_subdomain = false;
};

// Reversed-label trie over the distinct entry patterns. Immutable after
// compile(); lookups are safe from any number of threads.
class AdMatcher {
 public:
  AdMatcher();
  AdMatcher(AdMatcher&&) noexcept;
  AdMatcher& operator=(AdMatcher&&) noexcept;
  ~AdMatcher();

  std::optional<AdMatch> match(const Domain& d) const;
  bool is_ad(const Domain& d) const { return match(d).has_value(); }

  std::size_t entry_count() const { return entry_count_; }
  // source list name -> sha256 of its content
  const std::map<std::string, std::string>& source_digests() const { return digests_; }

 private:
  friend class MatcherBuilder;
  struct Node;
  std::unique_ptr<Node> root_;
  std::size_t entry_count_ = 0;
  SubdomainMatching mode_ = SubdomainMatching::Strict;
  std::map<std::string, std::string> digests_;
};

// Duplicate patterns merge with match_subdomains OR-combined. The recorded
// source of a merged pattern is the lexicographically smallest (source, line)
// so the result does not depend on insertion order.
AdMatcher compile(const std::vector<FilterEntry>& entries, SubdomainMatching mode = SubdomainMatching::Strict,
                  std::map<std::string, std::string> source_digests = {});

struct ListSource {
  std::string name;
  std::string content;
  ListFormat format = ListFormat::Auto;
};

struct CompiledLists {
  AdMatcher matcher;
  std::size_t rejects = 0;
};

CompiledLists compile_sources(const std::vector<ListSource>& sources, SubdomainMatching mode);
CompiledLists load_lists(const std::vector<std::filesystem::path>& paths, SubdomainMatching mode);

// One ads-classify output line:
// {"domain":…,"is_ad":bool,"matched_entry":…|null,"source_list":…|null}
std::string classification_jsonl(const Domain& d, const std::optional<AdMatch>& m);

}  // namespace admal::ads
