#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace intentscale {

using IntentId = std::uint32_t;

/// The global ordered label set. Ids are dense in [0, size()).
class IntentCatalog {
 public:
  IntentCatalog() = default;
  explicit IntentCatalog(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(IntentId id) const;

  std::optional<IntentId> find(std::string_view label) const;
  /// Throws Error(not_found) for unknown labels.
  IntentId id(std::string_view label) const;

  /// FNV-1a-64 over the newline-joined label list; a trained model records
  /// it so inference can refuse a different catalog.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, IntentId> index_;
  std::uint64_t fingerprint_ = 0;
};

/// Fixed-length membership vector over the catalog. Equality is
/// set equality.
class RelevantIntentsMask {
 public:
  RelevantIntentsMask() = default;
  explicit RelevantIntentsMask(std::size_t num_intents, bool value = false)
      : bits_(num_intents, value ? 1 : 0) {}

  static RelevantIntentsMask all(std::size_t num_intents) { return RelevantIntentsMask(num_intents, true); }
  static RelevantIntentsMask from_members(std::size_t num_intents, std::span<const IntentId> members);

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(IntentId id) const { return bits_.at(id) != 0; }
  void set(IntentId id, bool value = true) { bits_.at(id) = value ? 1 : 0; }
  void flip(IntentId id) { bits_.at(id) ^= 1; }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }
  std::vector<IntentId> members() const;
  bool is_subset_of(const RelevantIntentsMask& other) const;

  /// ceil(size/4) lowercase hex digits; digit k holds bits 4k..4k+3, lowest
  /// bit first.
  std::string to_hex() const;
  static RelevantIntentsMask from_hex(std::size_t num_intents, std::string_view hex);

  friend bool operator==(const RelevantIntentsMask&, const RelevantIntentsMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct Industry {
  std::string name;
  RelevantIntentsMask intents;
};

struct ClientProfile {
  std::string client_id;
  std::optional<std::string> industry;
  RelevantIntentsMask relevant;
  std::uint64_t version = 0;
};

/// Client registry with per-client relevant-intents masks.
///
/// Profiles are immutable snapshots behind shared_ptr; writers publish a new
/// snapshot under an exclusive lock, so a reader holding a snapshot never
/// sees a partially updated mask.
class ClientRegistry {
 public:
  using Snapshot = std::shared_ptr<const ClientProfile>;

  ClientRegistry(std::size_t num_intents, std::vector<Industry> industries);

  ClientRegistry(const ClientRegistry& other);
  ClientRegistry& operator=(const ClientRegistry& other);

  std::size_t num_intents() const noexcept { return num_intents_; }
  const std::vector<Industry>& industries() const noexcept { return industries_; }
  const Industry& industry(std::string_view name) const;
  bool has_industry(std::string_view name) const;

  Snapshot register_client(const std::string& client_id,
                           std::optional<std::string> industry = std::nullopt,
                           std::optional<RelevantIntentsMask> mask = std::nullopt);
  Snapshot update_relevant_intents(const std::string& client_id, RelevantIntentsMask mask);
  Snapshot assign_industry(const std::string& client_id, const std::string& industry);

  /// Restores a persisted profile verbatim, version included.
  void restore(ClientProfile profile);

  Snapshot get(const std::string& client_id) const;
  Snapshot find(const std::string& client_id) const;
  bool contains(const std::string& client_id) const;
  std::size_t size() const;
  std::vector<std::string> client_ids() const;
  std::vector<ClientProfile> profiles() const;

 private:
  void check_mask(const RelevantIntentsMask& mask) const;

  std::size_t num_intents_;
  std::vector<Industry> industries_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Snapshot, std::less<>> clients_;
};

void save_catalog(const IntentCatalog& catalog, const std::filesystem::path& path);
IntentCatalog load_catalog(const std::filesystem::path& path);

/// One industry per line: `name<TAB>hexmask`.
void save_industries(std::span<const Industry> industries, const std::filesystem::path& path);
std::vector<Industry> load_industries(const std::filesystem::path& path, std::size_t num_intents);

/// One client per line, sorted by id: `id<TAB>industry|-<TAB>version<TAB>hexmask`.
void save_registry(const ClientRegistry& registry, const std::filesystem::path& path);
ClientRegistry load_registry(const std::filesystem::path& path, std::size_t num_intents,
                             std::vector<Industry> industries);

}  // namespace intentscale
