#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "admal/domain.hpp"
#include "json.hpp"

namespace admal {

enum class RecordKind { Dns, Ti, Ad };

const char* to_string(RecordKind kind);
std::optional<RecordKind> parse_record_kind(std::string_view s);

// One stored verdict. The payload is kept as canonical compact JSON text;
// each producing module owns its payload schema.
struct VerdictRecord {
  Domain domain;
  std::string provider;
  std::string campaign;
  RecordKind kind = RecordKind::Dns;
  std::string payload;  // JSON object text
  std::string ts;       // RFC 3339, UTC, millisecond precision

  nlohmann::ordered_json payload_json() const { return nlohmann::ordered_json::parse(payload); }
};

// Canonical JSONL line (without newline):
// {"domain":…,"provider":…,"campaign":…,"kind":…,"payload":{…},"ts":…}
std::string to_jsonl(const VerdictRecord& rec);

// Throws Error{Schema} naming the offending field.
VerdictRecord from_jsonl(std::string_view line);

enum class Durability {
  Flush,  // write(2) before ack: survives process death
  Fsync,  // fsync(2) before ack: survives power loss
};

struct RepositoryOptions {
  Durability durability = Durability::Flush;
};

// Append-only JSONL log (records.jsonl) with a latest-wins in-memory view
// keyed by (domain, provider, campaign). Campaign manifests live under
// manifests/. A torn final line left by a killed writer is discarded on open.
//
// upsert() is serialized internally; readers take the same lock and receive
// copies.
class Repository {
 public:
  static Repository open(const std::filesystem::path& dir, RepositoryOptions opts = {});

  Repository(Repository&&) noexcept;
  Repository& operator=(Repository&&) noexcept;
  Repository(const Repository&) = delete;
  Repository& operator=(const Repository&) = delete;
  ~Repository();

  // Persists the record before returning. Throws Error{Storage}.
  void upsert(const VerdictRecord& rec);

  bool contains(std::string_view campaign, std::string_view provider, const Domain& domain) const;
  std::optional<VerdictRecord> get(std::string_view campaign, std::string_view provider,
                                   const Domain& domain) const;

  // Latest records for a campaign, sorted by UTF-8 byte order of (domain, provider).
  // Unknown campaign yields an empty vector.
  std::vector<VerdictRecord> query(std::string_view campaign,
                                   std::optional<std::string_view> provider = std::nullopt,
                                   std::optional<RecordKind> kind = std::nullopt) const;

  std::vector<std::string> campaigns() const;
  // Sorted provider ids with at least one record in the campaign.
  std::vector<std::string> providers(std::string_view campaign) const;
  bool has_campaign(std::string_view campaign) const;
  std::size_t size() const;

  // Latest view of every campaign, sorted by (domain, provider, campaign).
  std::size_t export_jsonl(const std::filesystem::path& path) const;
  std::string export_jsonl() const;
  // Upserts each line. Throws Error{Schema} with the 1-based line number.
  std::size_t import_jsonl(const std::filesystem::path& path);

  // Rewrites the log so it holds only the latest record per key.
  void compact();

  void write_manifest(std::string_view campaign, std::string_view name, const nlohmann::ordered_json& doc);
  std::optional<nlohmann::json> read_manifest(std::string_view campaign, std::string_view name) const;

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path log_path() const { return dir_ / "records.jsonl"; }

 private:
  struct Entry {
    RecordKind kind;
    std::string payload;
    std::string ts;
  };
  using DomainMap = std::unordered_map<std::string, Entry>;
  using ProviderMap = std::unordered_map<std::string, DomainMap>;

  Repository(std::filesystem::path dir, RepositoryOptions opts);
  void load();
  void apply(VerdictRecord rec);
  void append_line(const std::string& line);
  std::vector<VerdictRecord> snapshot_all() const;

  std::filesystem::path dir_;
  RepositoryOptions opts_;
  int fd_ = -1;
  std::unordered_map<std::string, ProviderMap> index_;
  std::size_t count_ = 0;
  mutable std::unique_ptr<std::mutex> mu_;
};

}  // namespace admal
