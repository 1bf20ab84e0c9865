#include "intentscale/catalog.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "intentscale/error.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// IntentCatalog

IntentCatalog::IntentCatalog(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::uint64_t hash = fnv1a64("");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto& label = labels_[i];
    if (label.empty()) throw Error(ErrorCode::invalid_argument, "intent labels must be non-empty");
    if (label.find_first_of("\t\n\r") != std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "intent label contains a control separator: " + label);
    }
    if (!index_.emplace(label, static_cast<IntentId>(i)).second) {
      throw Error(ErrorCode::already_exists, "duplicate intent label: " + label);
    }
    if (i > 0) hash = fnv1a64("\n", hash);
    hash = fnv1a64(label, hash);
  }
  fingerprint_ = hash;
}

const std::string& IntentCatalog::label(IntentId id) const {
  if (id >= labels_.size()) throw Error(ErrorCode::not_found, "intent id out of range: " + std::to_string(id));
  return labels_[id];
}

std::optional<IntentId> IntentCatalog::find(std::string_view label) const {
  const auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

IntentId IntentCatalog::id(std::string_view label) const {
  if (auto found = find(label)) return *found;
  throw Error(ErrorCode::not_found, "unknown intent label: " + std::string(label));
}

// ---------------------------------------------------------------------------
// RelevantIntentsMask

RelevantIntentsMask RelevantIntentsMask::from_members(std::size_t num_intents,
                                                      std::span<const IntentId> members) {
  RelevantIntentsMask mask(num_intents);
  for (IntentId id : members) {
    if (id >= num_intents) throw Error(ErrorCode::shape_mismatch, "mask member out of range");
    mask.set(id);
  }
  return mask;
}

std::size_t RelevantIntentsMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<IntentId> RelevantIntentsMask::members() const {
  std::vector<IntentId> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(static_cast<IntentId>(i));
  }
  return out;
}

bool RelevantIntentsMask::is_subset_of(const RelevantIntentsMask& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

std::string RelevantIntentsMask::to_hex() const {
  std::string hex((bits_.size() + 3) / 4, '0');
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (!bits_[i]) continue;
    const int nibble = hex_value(hex[i / 4]) | (1 << (i % 4));
    hex[i / 4] = kHexDigits[nibble];
  }
  return hex;
}

RelevantIntentsMask RelevantIntentsMask::from_hex(std::size_t num_intents, std::string_view hex) {
  if (hex.size() != (num_intents + 3) / 4) {
    throw Error(ErrorCode::shape_mismatch, "hex mask has " + std::to_string(hex.size()) +
                                               " digits, expected " + std::to_string((num_intents + 3) / 4));
  }
  RelevantIntentsMask mask(num_intents);
  for (std::size_t k = 0; k < hex.size(); ++k) {
    const int nibble = hex_value(hex[k]);
    if (nibble < 0) throw Error(ErrorCode::parse_error, "invalid hex digit in mask");
    for (int b = 0; b < 4; ++b) {
      if (!(nibble & (1 << b))) continue;
      const std::size_t i = 4 * k + static_cast<std::size_t>(b);
      if (i >= num_intents) throw Error(ErrorCode::parse_error, "hex mask sets bits past the catalog size");
      mask.set(static_cast<IntentId>(i));
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// ClientRegistry

ClientRegistry::ClientRegistry(std::size_t num_intents, std::vector<Industry> industries)
    : num_intents_(num_intents), industries_(std::move(industries)) {
  for (const auto& industry : industries_) {
    if (industry.intents.size() != num_intents_) {
      throw Error(ErrorCode::shape_mismatch, "industry " + industry.name + " mask length mismatch");
    }
    if (industry.intents.empty()) {
      throw Error(ErrorCode::invalid_argument, "industry " + industry.name + " has no intents");
    }
  }
}

ClientRegistry::ClientRegistry(const ClientRegistry& other)
    : num_intents_(other.num_intents_), industries_(other.industries_) {
  std::shared_lock lock(other.mutex_);
  clients_ = other.clients_;
}

ClientRegistry& ClientRegistry::operator=(const ClientRegistry& other) {
  if (this == &other) return *this;
  std::map<std::string, Snapshot, std::less<>> copy;
  {
    std::shared_lock lock(other.mutex_);
    copy = other.clients_;
  }
  std::unique_lock lock(mutex_);
  num_intents_ = other.num_intents_;
  industries_ = other.industries_;
  clients_ = std::move(copy);
  return *this;
}

const Industry& ClientRegistry::industry(std::string_view name) const {
  for (const auto& industry : industries_) {
    if (industry.name == name) return industry;
  }
  throw Error(ErrorCode::not_found, "unknown industry: " + std::string(name));
}

bool ClientRegistry::has_industry(std::string_view name) const {
  return std::any_of(industries_.begin(), industries_.end(),
                     [&](const Industry& industry) { return industry.name == name; });
}

void ClientRegistry::check_mask(const RelevantIntentsMask& mask) const {
  if (mask.size() != num_intents_) {
    throw Error(ErrorCode::shape_mismatch, "mask length " + std::to_string(mask.size()) +
                                               " does not match catalog size " + std::to_string(num_intents_));
  }
}

ClientRegistry::Snapshot ClientRegistry::register_client(const std::string& client_id,
                                                         std::optional<std::string> industry,
                                                         std::optional<RelevantIntentsMask> mask) {
  if (client_id.empty() || client_id.find_first_of("\t\n\r") != std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "invalid client id");
  }
  if (industry && !has_industry(*industry)) throw Error(ErrorCode::not_found, "unknown industry: " + *industry);
  if (mask) check_mask(*mask);

  auto profile = std::make_shared<ClientProfile>();
  profile->client_id = client_id;
  profile->industry = std::move(industry);
  profile->relevant = mask ? std::move(*mask) : RelevantIntentsMask::all(num_intents_);

  std::unique_lock lock(mutex_);
  if (clients_.contains(client_id)) throw Error(ErrorCode::already_exists, "client already registered: " + client_id);
  clients_.emplace(client_id, profile);
  return profile;
}

ClientRegistry::Snapshot ClientRegistry::update_relevant_intents(const std::string& client_id,
                                                                 RelevantIntentsMask mask) {
  check_mask(mask);
  std::unique_lock lock(mutex_);
  const auto it = clients_.find(client_id);
  if (it == clients_.end()) throw Error(ErrorCode::not_found, "unknown client: " + client_id);
  auto next = std::make_shared<ClientProfile>(*it->second);
  next->relevant = std::move(mask);
  next->version += 1;
  it->second = next;
  return next;
}

ClientRegistry::Snapshot ClientRegistry::assign_industry(const std::string& client_id,
                                                         const std::string& industry) {
  if (!has_industry(industry)) throw Error(ErrorCode::not_found, "unknown industry: " + industry);
  std::unique_lock lock(mutex_);
  const auto it = clients_.find(client_id);
  if (it == clients_.end()) throw Error(ErrorCode::not_found, "unknown client: " + client_id);
  auto next = std::make_shared<ClientProfile>(*it->second);
  next->industry = industry;
  it->second = next;
  return next;
}

void ClientRegistry::restore(ClientProfile profile) {
  check_mask(profile.relevant);
  if (profile.industry && !has_industry(*profile.industry)) {
    throw Error(ErrorCode::not_found, "unknown industry: " + *profile.industry);
  }
  std::unique_lock lock(mutex_);
  auto id = profile.client_id;
  clients_[id] = std::make_shared<const ClientProfile>(std::move(profile));
}

ClientRegistry::Snapshot ClientRegistry::get(const std::string& client_id) const {
  if (auto snapshot = find(client_id)) return snapshot;
  throw Error(ErrorCode::not_found, "unknown client: " + client_id);
}

ClientRegistry::Snapshot ClientRegistry::find(const std::string& client_id) const {
  std::shared_lock lock(mutex_);
  const auto it = clients_.find(client_id);
  return it == clients_.end() ? nullptr : it->second;
}

bool ClientRegistry::contains(const std::string& client_id) const { return find(client_id) != nullptr; }

std::size_t ClientRegistry::size() const {
  std::shared_lock lock(mutex_);
  return clients_.size();
}

std::vector<std::string> ClientRegistry::client_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  ids.reserve(clients_.size());
  for (const auto& [id, _] : clients_) ids.push_back(id);
  return ids;
}

std::vector<ClientProfile> ClientRegistry::profiles() const {
  std::shared_lock lock(mutex_);
  std::vector<ClientProfile> out;
  out.reserve(clients_.size());
  for (const auto& [_, profile] : clients_) out.push_back(*profile);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

void save_catalog(const IntentCatalog& catalog, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& label : catalog.labels()) out << label << '\n';
}

IntentCatalog load_catalog(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    labels.push_back(line);
  }
  return IntentCatalog(std::move(labels));
}

void save_industries(std::span<const Industry> industries, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& industry : industries) out << industry.name << '\t' << industry.intents.to_hex() << '\n';
}

std::vector<Industry> load_industries(const std::filesystem::path& path, std::size_t num_intents) {
  auto in = open_in(path);
  std::vector<Industry> industries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw Error(ErrorCode::parse_error, path.string() + ":" + std::to_string(line_no) + ": expected name<TAB>mask");
    }
    industries.push_back({fields[0], RelevantIntentsMask::from_hex(num_intents, fields[1])});
  }
  return industries;
}

void save_registry(const ClientRegistry& registry, const std::filesystem::path& path) {
  auto out = open_out(path);
  for (const auto& profile : registry.profiles()) {
    out << profile.client_id << '\t' << profile.industry.value_or("-") << '\t' << profile.version << '\t'
        << profile.relevant.to_hex() << '\n';
  }
}

ClientRegistry load_registry(const std::filesystem::path& path, std::size_t num_intents,
                             std::vector<Industry> industries) {
  ClientRegistry registry(num_intents, std::move(industries));
  auto in = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 4) throw Error(ErrorCode::parse_error, where + ": expected 4 tab-separated fields");
    ClientProfile profile;
    profile.client_id = fields[0];
    if (fields[1] != "-") profile.industry = fields[1];
    try {
      std::size_t used = 0;
      profile.version = std::stoull(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse_error, where + ": bad version field");
    }
    profile.relevant = RelevantIntentsMask::from_hex(num_intents, fields[3]);
    if (registry.contains(profile.client_id)) {
      throw Error(ErrorCode::already_exists, where + ": duplicate client " + profile.client_id);
    }
    registry.restore(std::move(profile));
  }
  return registry;
}

}  // namespace intentscale
