#include "admal/adlists.hpp"

#include <algorithm>
#include <tuple>
#include <unordered_map>

#include "admal/dns_wire.hpp"
#include "admal/error.hpp"
#include "admal/util.hpp"
#include "json.hpp"

namespace admal::ads {
namespace {

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    auto start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::string_view strip_inline_comment(std::string_view s) {
  auto hash = s.find('#');
  return trim(hash == std::string_view::npos ? s : s.substr(0, hash));
}

bool is_hosts_builtin(std::string_view host) {
  return host == "localhost" || host == "localhost.localdomain" || host == "local" ||
         host == "broadcasthost" || host == "ip6-localhost" || host == "ip6-loopback" ||
         host == "ip6-localnet" || host == "ip6-mcastprefix" || host == "ip6-allnodes" ||
         host == "ip6-allrouters" || host == "ip6-allhosts" || host == "0.0.0.0";
}

struct LineContext {
  ParsedList& out;
  std::string_view source;
  std::size_t line_no;
  std::string_view text;

  void reject(std::string reason) { out.rejects.push_back({line_no, std::string(text), std::move(reason)}); }

  void add(std::string_view host, bool subdomains) {
    try {
      out.entries.push_back({Domain::parse(host), subdomains, std::string(source), line_no});
    } catch (const Error& e) {
      reject(e.code() == ErrorCode::IpLiteral ? "ip-literal" : "invalid-domain");
    }
  }
};

void parse_adblock(LineContext& ctx, std::string_view line) {
  auto rest = line.substr(2);
  auto caret = rest.find('^');
  auto host = rest.substr(0, caret);
  auto tail = caret == std::string_view::npos ? std::string_view{} : rest.substr(caret + 1);
  if (host.find_first_of("/*?=&") != std::string_view::npos) return ctx.reject("path-rule");
  if (!tail.empty() && tail != "|") return ctx.reject("rule-options");
  ctx.add(host, true);
}

}  // namespace

std::optional<ListFormat> parse_list_format(std::string_view s) {
  if (s == "auto") return ListFormat::Auto;
  if (s == "hosts") return ListFormat::Hosts;
  if (s == "plain") return ListFormat::Plain;
  if (s == "adblock") return ListFormat::Adblock;
  return std::nullopt;
}

std::optional<SubdomainMatching> parse_subdomain_matching(std::string_view s) {
  if (s == "strict") return SubdomainMatching::Strict;
  if (s == "always") return SubdomainMatching::Always;
  return std::nullopt;
}

ParsedList parse_list(std::string_view text, ListFormat hint, std::string_view source_name) {
  ParsedList out;
  std::size_t line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty()) continue;
    LineContext ctx{out, source_name, line_no, line};

    if (line.find("##") != std::string_view::npos || line.find("#@#") != std::string_view::npos ||
        line.find("#?#") != std::string_view::npos || line.find("#$#") != std::string_view::npos) {
      ctx.reject("cosmetic-filter");
      continue;
    }
    if (line.front() == '#' || line.front() == '!') {
      ctx.reject("comment");
      continue;
    }
    if (line.front() == '[') {
      ctx.reject("list-header");
      continue;
    }
    if (line.starts_with("@@")) {
      ctx.reject("exception-rule");
      continue;
    }
    if (line.starts_with("||")) {
      if (hint != ListFormat::Auto && hint != ListFormat::Adblock) {
        ctx.reject("unexpected-adblock-rule");
      } else {
        parse_adblock(ctx, line);
      }
      continue;
    }
    if (hint == ListFormat::Adblock) {
      ctx.reject("unsupported-rule");
      continue;
    }

    auto toks = tokens(strip_inline_comment(line));
    if (toks.empty()) {
      ctx.reject("comment");
      continue;
    }
    if (toks.size() >= 2 && dns::parse_ip(toks[0])) {
      if (hint == ListFormat::Plain) {
        ctx.reject("unexpected-hosts-line");
        continue;
      }
      for (std::size_t i = 1; i < toks.size(); ++i) {
        if (is_hosts_builtin(toks[i])) {
          ctx.reject("hosts-builtin");
        } else {
          ctx.add(toks[i], false);
        }
      }
      continue;
    }
    if (toks.size() == 1 && toks[0].find_first_of("/|^$*?=&:") == std::string_view::npos) {
      if (hint == ListFormat::Hosts) {
        ctx.reject("unexpected-plain-line");
      } else {
        ctx.add(toks[0], false);
      }
      continue;
    }
    ctx.reject("unsupported-rule");
  }
  return out;
}

struct AdMatcher::Node {
  std::unordered_map<std::string, std::unique_ptr<Node>> children;
  bool terminal = false;
  bool match_subdomains = false;
  std::string pattern;
  std::string source;
  std::size_t line_no = 0;
};

AdMatcher::AdMatcher() : root_(std::make_unique<Node>()) {}
AdMatcher::AdMatcher(AdMatcher&&) noexcept = default;
AdMatcher& AdMatcher::operator=(AdMatcher&&) noexcept = default;
AdMatcher::~AdMatcher() = default;

std::optional<AdMatch> AdMatcher::match(const Domain& d) const {
  const std::string& name = d.str();
  const Node* node = root_.get();
  const Node* best_parent = nullptr;
  std::size_t end = name.size();
  while (true) {
    const auto dot = end == 0 ? std::string::npos : name.rfind('.', end - 1);
    const auto start = dot == std::string::npos ? 0 : dot + 1;
    auto it = node->children.find(name.substr(start, end - start));
    if (it == node->children.end()) break;
    node = it->second.get();
    if (dot == std::string::npos) {
      if (node->terminal) return AdMatch{node->pattern, node->source, false};
      break;
    }
    if (node->terminal && (node->match_subdomains || mode_ == SubdomainMatching::Always)) best_parent = node;
    end = dot;
  }
  if (best_parent) return AdMatch{best_parent->pattern, best_parent->source, true};
  return std::nullopt;
}

class MatcherBuilder {
 public:
  static AdMatcher build(const std::vector<FilterEntry>& entries, SubdomainMatching mode,
                         std::map<std::string, std::string> digests) {
    AdMatcher m;
    m.mode_ = mode;
    m.digests_ = std::move(digests);
    for (const auto& e : entries) {
      const std::string& name = e.pattern.str();
      AdMatcher::Node* node = m.root_.get();
      std::size_t end = name.size();
      while (true) {
        const auto dot = end == 0 ? std::string::npos : name.rfind('.', end - 1);
        const auto start = dot == std::string::npos ? 0 : dot + 1;
        auto& child = node->children[name.substr(start, end - start)];
        if (!child) child = std::make_unique<AdMatcher::Node>();
        node = child.get();
        if (dot == std::string::npos) break;
        end = dot;
      }
      if (!node->terminal) {
        node->terminal = true;
        node->pattern = name;
        node->source = e.source_list;
        node->line_no = e.line_no;
        ++m.entry_count_;
      } else if (std::tie(e.source_list, e.line_no) < std::tie(node->source, node->line_no)) {
        node->source = e.source_list;
        node->line_no = e.line_no;
      }
      node->match_subdomains = node->match_subdomains || e.match_subdomains;
    }
    return m;
  }
};

AdMatcher compile(const std::vector<FilterEntry>& entries, SubdomainMatching mode,
                  std::map<std::string, std::string> source_digests) {
  return MatcherBuilder::build(entries, mode, std::move(source_digests));
}

CompiledLists compile_sources(const std::vector<ListSource>& sources, SubdomainMatching mode) {
  std::vector<FilterEntry> all;
  std::map<std::string, std::string> digests;
  std::size_t rejects = 0;
  for (const auto& src : sources) {
    auto parsed = parse_list(src.content, src.format, src.name);
    rejects += parsed.rejects.size();
    digests[src.name] = "sha256:" + sha256_hex(src.content);
    std::move(parsed.entries.begin(), parsed.entries.end(), std::back_inserter(all));
  }
  return {compile(all, mode, std::move(digests)), rejects};
}

CompiledLists load_lists(const std::vector<std::filesystem::path>& paths, SubdomainMatching mode) {
  std::vector<ListSource> sources;
  for (const auto& p : paths) sources.push_back({p.filename().string(), read_file(p), ListFormat::Auto});
  return compile_sources(sources, mode);
}

std::string classification_jsonl(const Domain& d, const std::optional<AdMatch>& m) {
  nlohmann::ordered_json j;
  j["domain"] = d.str();
  j["is_ad"] = m.has_value();
  j["matched_entry"] = m ? nlohmann::ordered_json(m->matched_entry) : nlohmann::ordered_json(nullptr);
  j["source_list"] = m ? nlohmann::ordered_json(m->source_list) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

}  // namespace admal::ads
