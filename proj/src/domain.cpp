#include "admal/domain.hpp"

#include <algorithm>

#include "admal/error.hpp"
#include "admal/punycode.hpp"
#include "admal/util.hpp"
#include "json.hpp"

namespace admal {
namespace {

constexpr std::size_t kMaxLabel = 63;
constexpr std::size_t kMaxName = 253;

bool is_host_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

char32_t fold_case(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 0x20;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
  return c;
}

std::vector<std::string_view> split_labels(std::string_view name) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto dot = name.find('.', pos);
    out.push_back(name.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return out;
}

}  // namespace

bool is_ip_literal(std::string_view host) {
  if (host.empty()) return false;
  if (host.front() == '[' || host.find(':') != std::string_view::npos) return true;
  if (host.back() == '.') host.remove_suffix(1);
  auto last_dot = host.rfind('.');
  auto last = last_dot == std::string_view::npos ? host : host.substr(last_dot + 1);
  // A numeric final label is parsed as IPv4 by URL parsers (e.g. "192.0.2.7", "0x7f.1").
  if (all_digits(last)) return true;
  if (last.size() > 2 && last[0] == '0' && (last[1] == 'x' || last[1] == 'X') &&
      std::all_of(last.begin() + 2, last.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
    return true;
  }
  return false;
}

Domain Domain::parse(std::string_view host) {
  if (host.empty()) fail(ErrorCode::InvalidHost, "empty host");
  if (is_ip_literal(host)) fail(ErrorCode::IpLiteral, std::string(host));
  std::string_view h = host;
  if (h.back() == '.') h.remove_suffix(1);
  if (h.empty()) fail(ErrorCode::InvalidHost, std::string(host));

  std::string name;
  name.reserve(h.size());
  bool first = true;
  for (auto label : split_labels(h)) {
    if (!first) name.push_back('.');
    first = false;
    if (label.empty()) fail(ErrorCode::InvalidHost, "empty label in " + std::string(host));

    std::string ascii;
    bool has_non_ascii = std::any_of(label.begin(), label.end(),
                                     [](char c) { return static_cast<unsigned char>(c) >= 0x80; });
    if (has_non_ascii) {
      auto cps = punycode::utf8_decode(label);
      if (!cps) fail(ErrorCode::InvalidHost, "invalid UTF-8 in " + std::string(host));
      for (auto& c : *cps) c = fold_case(c);
      auto enc = punycode::encode(*cps);
      if (!enc) fail(ErrorCode::InvalidHost, "punycode overflow in " + std::string(host));
      ascii = "xn--" + *enc;
    } else {
      ascii.assign(label);
      ascii_lower_inplace(ascii);
    }
    if (ascii.size() > kMaxLabel) fail(ErrorCode::InvalidHost, "label too long in " + std::string(host));
    if (!std::all_of(ascii.begin(), ascii.end(), is_host_char)) {
      fail(ErrorCode::InvalidHost, "invalid character in " + std::string(host));
    }
    name += ascii;
  }
  if (name.size() > kMaxName) fail(ErrorCode::InvalidHost, "name too long");
  return Domain(std::move(name));
}

bool Domain::is_subdomain_of(const Domain& parent) const {
  const auto& p = parent.name_;
  return name_.size() > p.size() + 1 && name_.ends_with(p) &&
         name_[name_.size() - p.size() - 1] == '.';
}

std::optional<std::string> url_host(std::string_view url) {
  url = trim(url);
  std::size_t scheme_len = 0;
  auto starts_ci = [&](std::string_view prefix) {
    if (url.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
      char c = url[i];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
      if (c != prefix[i]) return false;
    }
    return true;
  };
  if (starts_ci("http://")) {
    scheme_len = 7;
  } else if (starts_ci("https://")) {
    scheme_len = 8;
  } else {
    return std::nullopt;
  }
  if (std::any_of(url.begin(), url.end(), [](char c) { return c == ' ' || c == '\t'; })) {
    return std::nullopt;
  }
  auto rest = url.substr(scheme_len);
  auto auth_end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, auth_end);
  if (auto at = authority.rfind('@'); at != std::string_view::npos) {
    authority = authority.substr(at + 1);
  }
  std::string_view host;
  std::string_view after;
  if (!authority.empty() && authority.front() == '[') {
    auto close = authority.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    host = authority.substr(0, close + 1);
    after = authority.substr(close + 1);
  } else {
    auto colon = authority.find(':');
    host = authority.substr(0, colon);
    after = colon == std::string_view::npos ? std::string_view{} : authority.substr(colon);
  }
  if (!after.empty()) {
    if (after.front() != ':') return std::nullopt;
    auto port = after.substr(1);
    if (!port.empty() && (!all_digits(port) || port.size() > 5 || std::stoul(std::string(port)) > 65535)) {
      return std::nullopt;
    }
  }
  if (host.empty()) return std::nullopt;
  return std::string(host);
}

ParsedRecords parse_url_list(std::string_view text) {
  ParsedRecords out;
  std::size_t line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (!url_host(line)) {
      out.rejects.push_back({line_no, std::string(line), "malformed-url"});
      continue;
    }
    out.records.push_back({std::string(line), std::nullopt, std::nullopt});
  }
  return out;
}

std::vector<RequestRecord> parse_capture(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Schema, std::string("$: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries")) fail(ErrorCode::Schema, "entries");
  const auto& entries = doc["entries"];
  if (!entries.is_array()) fail(ErrorCode::Schema, "entries");

  std::vector<RequestRecord> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto path = "entries[" + std::to_string(i) + "]";
    if (!e.is_object()) fail(ErrorCode::Schema, path);
    auto it = e.find("url");
    if (it == e.end() || !it->is_string() || !url_host(it->get<std::string>())) {
      fail(ErrorCode::Schema, path + ".url");
    }
    RequestRecord rec;
    rec.url = it->get<std::string>();
    if (auto p = e.find("page"); p != e.end() && !p->is_null()) {
      if (!p->is_string()) fail(ErrorCode::Schema, path + ".page");
      rec.source_page = p->get<std::string>();
    }
    if (auto t = e.find("ts"); t != e.end() && !t->is_null()) {
      if (!t->is_string()) fail(ErrorCode::Schema, path + ".ts");
      rec.observed_at = t->get<std::string>();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

Domain extract_domain(std::string_view url) {
  auto host = url_host(url);
  if (!host) fail(ErrorCode::InvalidHost, "not an absolute http(s) URL: " + std::string(url));
  return Domain::parse(*host);
}

PublicSuffixList PublicSuffixList::parse(std::string_view text) {
  PublicSuffixList psl;
  for (auto raw : split_lines(text)) {
    auto line = trim(raw);
    if (line.empty() || line.starts_with("//")) continue;
    if (auto sp = line.find_first_of(" \t"); sp != std::string_view::npos) line = line.substr(0, sp);
    bool exception = false;
    bool wildcard = false;
    if (line.starts_with("!")) {
      exception = true;
      line.remove_prefix(1);
    } else if (line.starts_with("*.")) {
      wildcard = true;
      line.remove_prefix(2);
    }
    std::string rule;
    try {
      rule = Domain::parse(line).str();
    } catch (const Error&) {
      continue;
    }
    if (exception) {
      psl.exceptions_.insert(rule);
    } else if (wildcard) {
      psl.wildcards_.insert(rule);
    } else {
      psl.rules_.insert(rule);
    }
  }
  return psl;
}

Domain PublicSuffixList::registrable(const Domain& d) const {
  const std::string& name = d.str();
  std::vector<std::size_t> starts{0};
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '.') starts.push_back(i + 1);
  }
  const std::size_t n = starts.size();
  std::size_t suffix_label = n - 1;  // implicit "*" rule
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = name.substr(starts[i]);
    if (exceptions_.count(s)) {
      suffix_label = i + 1;
      break;
    }
    if (rules_.count(s) || (i + 1 < n && wildcards_.count(name.substr(starts[i + 1])))) {
      suffix_label = i;
      break;
    }
  }
  if (suffix_label == 0 || suffix_label >= n) return d;
  return Domain::from_normalized(name.substr(starts[suffix_label - 1]));
}

Corpus dedupe(const std::vector<RequestRecord>& records, const DedupeOptions& opts) {
  Corpus corpus;
  DomainSet seen;
  for (const auto& rec : records) {
    try {
      auto d = extract_domain(rec.url);
      if (opts.collapse_to_registrable) d = opts.collapse_to_registrable->registrable(d);
      if (seen.insert(d).second) corpus.domains.push_back(std::move(d));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IpLiteral) {
        ++corpus.ip_literal_rejects;
      } else {
        ++corpus.invalid_host_rejects;
      }
    }
  }
  return corpus;
}

std::vector<Domain> read_corpus(std::string_view text) {
  std::vector<Domain> out;
  DomainSet seen;
  for (auto raw : split_lines(text)) {
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto d = Domain::parse(line);
    if (seen.insert(d).second) out.push_back(std::move(d));
  }
  return out;
}

std::string render_corpus(const std::vector<Domain>& domains) {
  std::string out;
  for (const auto& d : domains) {
    out += d.str();
    out.push_back('\n');
  }
  return out;
}

}  // namespace admal
