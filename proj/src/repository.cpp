#include "admal/repository.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "admal/error.hpp"
#include "admal/util.hpp"

namespace admal {
namespace {

using ojson = nlohmann::ordered_json;

std::string json_quote(std::string_view s) { return ojson(std::string(s)).dump(); }

int open_log(const std::filesystem::path& path) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::Storage, "cannot open log " + path.string() + ": " + std::strerror(errno));
  return fd;
}

bool record_less(const VerdictRecord& a, const VerdictRecord& b) {
  if (a.domain.str() != b.domain.str()) return a.domain.str() < b.domain.str();
  if (a.provider != b.provider) return a.provider < b.provider;
  return a.campaign < b.campaign;
}

std::string manifest_file(std::string_view campaign, std::string_view name) {
  std::string out;
  for (char c : campaign) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '-' || c == '_' || c == '.';
    out.push_back(safe ? c : '_');
  }
  out += ".";
  out += name;
  out += ".json";
  return out;
}

}  // namespace

const char* to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::Dns: return "dns";
    case RecordKind::Ti: return "ti";
    case RecordKind::Ad: return "ad";
  }
  return "dns";
}

std::optional<RecordKind> parse_record_kind(std::string_view s) {
  if (s == "dns") return RecordKind::Dns;
  if (s == "ti") return RecordKind::Ti;
  if (s == "ad") return RecordKind::Ad;
  return std::nullopt;
}

std::string to_jsonl(const VerdictRecord& rec) {
  std::string line;
  line.reserve(96 + rec.payload.size() + rec.domain.str().size());
  line += "{\"domain\":";
  line += json_quote(rec.domain.str());
  line += ",\"provider\":";
  line += json_quote(rec.provider);
  line += ",\"campaign\":";
  line += json_quote(rec.campaign);
  line += ",\"kind\":\"";
  line += to_string(rec.kind);
  line += "\",\"payload\":";
  line += rec.payload.empty() ? "{}" : rec.payload;
  line += ",\"ts\":";
  line += json_quote(rec.ts);
  line += "}";
  return line;
}

VerdictRecord from_jsonl(std::string_view line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Schema, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Schema, "record is not an object");
  auto str_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) fail(ErrorCode::Schema, std::string("missing or non-string field: ") + key);
    return it->get<std::string>();
  };
  const auto domain = str_field("domain");
  VerdictRecord rec{Domain::from_normalized(""), "", "", RecordKind::Dns, "", ""};
  try {
    rec.domain = Domain::parse(domain);
  } catch (const Error& e) {
    fail(ErrorCode::Schema, "invalid domain: " + domain);
  }
  rec.provider = str_field("provider");
  if (rec.provider.empty()) fail(ErrorCode::Schema, "empty provider");
  rec.campaign = str_field("campaign");
  const auto kind = parse_record_kind(str_field("kind"));
  if (!kind) fail(ErrorCode::Schema, "unknown kind");
  rec.kind = *kind;
  auto p = j.find("payload");
  if (p == j.end() || !p->is_object()) fail(ErrorCode::Schema, "missing or non-object field: payload");
  rec.payload = p->dump();
  rec.ts = str_field("ts");
  return rec;
}

Repository::Repository(std::filesystem::path dir, RepositoryOptions opts)
    : dir_(std::move(dir)), opts_(opts), mu_(std::make_unique<std::mutex>()) {}

Repository::Repository(Repository&& o) noexcept
    : dir_(std::move(o.dir_)),
      opts_(o.opts_),
      fd_(std::exchange(o.fd_, -1)),
      index_(std::move(o.index_)),
      count_(o.count_),
      mu_(std::move(o.mu_)) {}

Repository& Repository::operator=(Repository&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    dir_ = std::move(o.dir_);
    opts_ = o.opts_;
    fd_ = std::exchange(o.fd_, -1);
    index_ = std::move(o.index_);
    count_ = o.count_;
    mu_ = std::move(o.mu_);
  }
  return *this;
}

Repository::~Repository() {
  if (fd_ >= 0) ::close(fd_);
}

Repository Repository::open(const std::filesystem::path& dir, RepositoryOptions opts) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "manifests", ec);
  if (ec) fail(ErrorCode::Storage, "cannot create repository " + dir.string() + ": " + ec.message());
  Repository repo(dir, opts);
  repo.load();
  repo.fd_ = open_log(repo.log_path());
  return repo;
}

void Repository::load() {
  const auto path = log_path();
  if (!std::filesystem::exists(path)) return;
  const std::string text = read_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      // Torn tail from an interrupted append: drop it.
      log_event(LogLevel::Warn, "repository.torn_tail_discarded",
                {{"path", path.string()}, {"bytes", std::to_string(text.size() - pos)}});
      std::filesystem::resize_file(path, pos);
      break;
    }
    const std::string_view line(text.data() + pos, nl - pos);
    if (!trim(line).empty()) {
      try {
        apply(from_jsonl(line));
      } catch (const Error& e) {
        fail(ErrorCode::Storage, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
    pos = nl + 1;
  }
}

void Repository::apply(VerdictRecord rec) {
  auto& dm = index_[rec.campaign][rec.provider];
  auto [it, inserted] = dm.insert_or_assign(rec.domain.str(), Entry{rec.kind, std::move(rec.payload), std::move(rec.ts)});
  if (inserted) ++count_;
}

void Repository::append_line(const std::string& line) {
  std::string buf = line;
  buf.push_back('\n');
  std::size_t off = 0;
  while (off < buf.size()) {
    const auto w = ::write(fd_, buf.data() + off, buf.size() - off);
    if (w < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Storage, std::string("append failed: ") + std::strerror(errno));
    }
    off += static_cast<std::size_t>(w);
  }
  if (opts_.durability == Durability::Fsync && ::fsync(fd_) != 0) {
    fail(ErrorCode::Storage, std::string("fsync failed: ") + std::strerror(errno));
  }
}

void Repository::upsert(const VerdictRecord& rec) {
  const auto line = to_jsonl(rec);
  std::lock_guard lock(*mu_);
  append_line(line);
  apply(rec);
}

bool Repository::contains(std::string_view campaign, std::string_view provider, const Domain& domain) const {
  return get(campaign, provider, domain).has_value();
}

std::optional<VerdictRecord> Repository::get(std::string_view campaign, std::string_view provider,
                                             const Domain& domain) const {
  std::lock_guard lock(*mu_);
  auto c = index_.find(std::string(campaign));
  if (c == index_.end()) return std::nullopt;
  auto p = c->second.find(std::string(provider));
  if (p == c->second.end()) return std::nullopt;
  auto d = p->second.find(domain.str());
  if (d == p->second.end()) return std::nullopt;
  return VerdictRecord{domain, std::string(provider), std::string(campaign), d->second.kind, d->second.payload,
                       d->second.ts};
}

std::vector<VerdictRecord> Repository::query(std::string_view campaign, std::optional<std::string_view> provider,
                                             std::optional<RecordKind> kind) const {
  std::vector<VerdictRecord> out;
  {
    std::lock_guard lock(*mu_);
    auto c = index_.find(std::string(campaign));
    if (c == index_.end()) return out;
    for (const auto& [pid, dm] : c->second) {
      if (provider && pid != *provider) continue;
      for (const auto& [name, e] : dm) {
        if (kind && e.kind != *kind) continue;
        out.push_back({Domain::from_normalized(name), pid, std::string(campaign), e.kind, e.payload, e.ts});
      }
    }
  }
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

std::vector<std::string> Repository::campaigns() const {
  std::lock_guard lock(*mu_);
  std::vector<std::string> out;
  for (const auto& [c, _] : index_) out.push_back(c);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> Repository::providers(std::string_view campaign) const {
  std::lock_guard lock(*mu_);
  std::vector<std::string> out;
  auto c = index_.find(std::string(campaign));
  if (c == index_.end()) return out;
  for (const auto& [p, _] : c->second) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

bool Repository::has_campaign(std::string_view campaign) const {
  std::lock_guard lock(*mu_);
  return index_.count(std::string(campaign)) > 0;
}

std::size_t Repository::size() const {
  std::lock_guard lock(*mu_);
  return count_;
}

std::vector<VerdictRecord> Repository::snapshot_all() const {
  std::vector<VerdictRecord> out;
  {
    std::lock_guard lock(*mu_);
    out.reserve(count_);
    for (const auto& [cid, pm] : index_) {
      for (const auto& [pid, dm] : pm) {
        for (const auto& [name, e] : dm) {
          out.push_back({Domain::from_normalized(name), pid, cid, e.kind, e.payload, e.ts});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), record_less);
  return out;
}

std::string Repository::export_jsonl() const {
  std::string out;
  for (const auto& rec : snapshot_all()) {
    out += to_jsonl(rec);
    out.push_back('\n');
  }
  return out;
}

std::size_t Repository::export_jsonl(const std::filesystem::path& path) const {
  const auto records = snapshot_all();
  std::string out;
  for (const auto& rec : records) {
    out += to_jsonl(rec);
    out.push_back('\n');
  }
  write_file_atomic(path, out);
  return records.size();
}

std::size_t Repository::import_jsonl(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<VerdictRecord> parsed;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      parsed.push_back(from_jsonl(line));
    } catch (const Error& e) {
      fail(ErrorCode::Schema, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  // Validate the whole file before touching the log.
  for (const auto& rec : parsed) upsert(rec);
  return parsed.size();
}

void Repository::compact() {
  const auto records = snapshot_all();
  std::string out;
  for (const auto& rec : records) {
    out += to_jsonl(rec);
    out.push_back('\n');
  }
  std::lock_guard lock(*mu_);
  write_file_atomic(log_path(), out);
  if (fd_ >= 0) ::close(fd_);
  fd_ = open_log(log_path());
}

void Repository::write_manifest(std::string_view campaign, std::string_view name, const nlohmann::ordered_json& doc) {
  write_file_atomic(dir_ / "manifests" / manifest_file(campaign, name), doc.dump(2) + "\n");
}

std::optional<nlohmann::json> Repository::read_manifest(std::string_view campaign, std::string_view name) const {
  const auto path = dir_ / "manifests" / manifest_file(campaign, name);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::Storage, "corrupt manifest " + path.string());
  }
}

}  // namespace admal
