#include "intentscale/service.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "intentscale/error.hpp"

namespace intentscale {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  const std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

ordered_json record_json(const LogRecord& r, const IntentCatalog& catalog) {
  ordered_json j;
  j["timestamp"] = r.timestamp;
  j["client_id"] = r.client_id;
  j["intent"] = r.intent ? ordered_json(catalog.label(*r.intent)) : ordered_json(nullptr);
  j["mask_version"] = r.mask_version;
  return j;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::already_exists: return 409;
    case ErrorCode::io_error:
    case ErrorCode::numerical_error:
    case ErrorCode::fingerprint_mismatch: return 500;
    default: return 400;
  }
}

std::optional<ordered_json> parse_body(const std::string& body, Response& error) {
  try {
    auto j = ordered_json::parse(body);
    if (!j.is_object()) {
      error = error_response(400, "malformed_body", "request body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    error = error_response(400, "malformed_body", e.what());
    return std::nullopt;
  }
}

/// String field accessor; absent fields read as `fallback` when given.
std::optional<std::string> string_field(const ordered_json& j, const char* name, Response& error,
                                        std::optional<std::string> fallback = std::nullopt) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) {
    if (fallback) return fallback;
    error = error_response(400, "missing_field", std::string("missing field: ") + name);
    return std::nullopt;
  }
  if (!it->is_string()) {
    error = error_response(400, "invalid_field", std::string("field must be a string: ") + name);
    return std::nullopt;
  }
  return it->get<std::string>();
}

}  // namespace

void apply_env_overrides(ServiceConfig& config) {
  const auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? v : nullptr;
  };
  if (const char* v = env("INTENTSCALE_BIND")) config.bind = v;
  if (const char* v = env("INTENTSCALE_MODEL")) config.model = v;
  if (const char* v = env("INTENTSCALE_REGISTRY")) config.registry = v;
  if (const char* v = env("INTENTSCALE_CATALOG")) config.catalog = v;
  if (const char* v = env("INTENTSCALE_LOG")) config.log = v;
}

PredictionLog::PredictionLog(std::filesystem::path path, const IntentCatalog& catalog) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  if (!in) throw Error(ErrorCode::io_error, "cannot read prediction log " + path_.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LogRecord r;
      r.timestamp = j.at("timestamp").get<std::string>();
      r.client_id = j.at("client_id").get<std::string>();
      if (!j.at("intent").is_null()) r.intent = catalog.id(j.at("intent").get<std::string>());
      r.mask_version = j.at("mask_version").get<std::uint64_t>();
      records_.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse_error, path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void PredictionLog::append(LogRecord record, const IntentCatalog& catalog) {
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    out << record_json(record, catalog).dump() << '\n';
    if (!out) throw Error(ErrorCode::io_error, "cannot append to prediction log " + path_.string());
  }
  records_.push_back(std::move(record));
}

std::vector<LogRecord> PredictionLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t PredictionLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

IntentHistogram PredictionLog::replay(std::string_view client_id, std::size_t num_intents) const {
  std::lock_guard lock(mutex_);
  IntentHistogram hist(num_intents);
  for (const auto& r : records_) {
    if (r.client_id == client_id && r.intent) hist.add(*r.intent);
  }
  return hist;
}

Response error_response(int status, std::string_view code, std::string_view message) {
  Response r;
  r.status = status;
  r.body["error"] = {{"code", std::string(code)}, {"message", std::string(message)}};
  return r;
}

Service::Service(ModelBundle model, IntentCatalog catalog, ClientRegistry registry, ServiceConfig config)
    : model_(std::move(model)),
      catalog_(std::move(catalog)),
      registry_(std::move(registry)),
      config_(std::move(config)),
      log_(config_.log, catalog_) {
  model_.check_catalog(catalog_);
  if (registry_.num_intents() != catalog_.size()) {
    throw Error(ErrorCode::shape_mismatch, "registry masks do not match the catalog size");
  }
  if (config_.top_k == 0) throw Error(ErrorCode::invalid_argument, "top_k must be positive");
}

std::unique_ptr<Service> Service::load(const ServiceConfig& config) {
  if (config.model.empty() || config.registry.empty() || config.catalog.empty()) {
    throw Error(ErrorCode::invalid_argument, "model, registry and catalog paths are required");
  }
  IntentCatalog catalog = load_catalog(config.catalog);
  ModelBundle model = load_checkpoint(config.model);
  model.check_catalog(catalog);
  std::vector<Industry> industries;
  const auto industries_path = config.catalog.parent_path() / "industries.tsv";
  if (std::filesystem::exists(industries_path)) industries = load_industries(industries_path, catalog.size());
  ClientRegistry registry = load_registry(config.registry, catalog.size(), std::move(industries));
  return std::make_unique<Service>(std::move(model), std::move(catalog), std::move(registry), config);
}

std::string Service::fingerprint() const { return fingerprint_hex(model_.catalog_fingerprint); }

ordered_json Service::client_json(const ClientProfile& profile) const {
  ordered_json j;
  j["client_id"] = profile.client_id;
  j["industry"] = profile.industry ? ordered_json(*profile.industry) : ordered_json(nullptr);
  j["mask_version"] = profile.version;
  auto labels = ordered_json::array();
  for (IntentId id : profile.relevant.members()) labels.push_back(catalog_.label(id));
  j["intents"] = std::move(labels);
  return j;
}

void Service::persist() {
  if (config_.persist_registry && !config_.registry.empty()) save_registry(registry_, config_.registry);
}

Response Service::predict(const std::string& body) {
  ++requests_;
  Response error;
  const auto j = parse_body(body, error);
  if (!j) return error;
  const auto client_id = string_field(*j, "client_id", error);
  if (!client_id) return error;
  const auto subject = string_field(*j, "subject", error, std::string());
  if (!subject) return error;
  const auto description = string_field(*j, "description", error, std::string());
  if (!description) return error;
  const auto mode_name = string_field(*j, "filter_mode", error, std::string("strict"));
  if (!mode_name) return error;
  FilterMode mode;
  try {
    mode = parse_filter_mode(*mode_name);
  } catch (const Error& e) {
    return error_response(400, "invalid_filter_mode", e.what());
  }
  if (subject->empty() && description->empty()) {
    return error_response(400, "empty_ticket", "subject and description are both empty");
  }

  // One snapshot serves as both the feature and the filter.
  const auto profile = registry_.find(*client_id);
  if (!profile) return error_response(404, "unknown_client", "client is not registered: " + *client_id);
  const PredictionResult result = intentscale::predict(model_, *subject + " " + *description, profile->relevant, mode);

  Response r;
  r.body["client_id"] = *client_id;
  r.body["chosen"] = result.chosen ? ordered_json(catalog_.label(*result.chosen)) : ordered_json(nullptr);
  r.body["abstained"] = !result.chosen.has_value();
  r.body["top1"] = catalog_.label(result.top1);
  r.body["filtered"] = result.filtered;
  auto top = ordered_json::array();
  const std::size_t k = std::min(config_.top_k, result.ranked.size());
  for (std::size_t i = 0; i < k; ++i) {
    const IntentId id = result.ranked[i];
    top.push_back({{"intent", catalog_.label(id)}, {"probability", result.scores(id)}});
  }
  r.body["top_k"] = std::move(top);
  r.body["filter_mode"] = to_string(mode);
  r.body["model_fingerprint"] = fingerprint();
  r.body["mask_version"] = profile->version;

  LogRecord record{utc_timestamp(), *client_id, config_.log_top1 ? std::optional(result.top1) : result.chosen,
                   profile->version};
  log_.append(std::move(record), catalog_);
  return r;
}

Response Service::put_intents(const std::string& client_id, const std::string& body) {
  ordered_json j;
  try {
    j = ordered_json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(400, "malformed_body", e.what());
  }
  // Accept either a bare label array or {"intents": [...]}.
  const ordered_json* labels = &j;
  if (j.is_object()) {
    const auto it = j.find("intents");
    if (it == j.end()) return error_response(400, "missing_field", "missing field: intents");
    labels = &*it;
  }
  if (!labels->is_array()) return error_response(400, "invalid_field", "intents must be a list of labels");
  RelevantIntentsMask mask(catalog_.size());
  for (const auto& label : *labels) {
    if (!label.is_string()) return error_response(400, "invalid_field", "intent labels must be strings");
    const auto id = catalog_.find(label.get<std::string>());
    if (!id) return error_response(400, "unknown_intent", "unknown intent label: " + label.get<std::string>());
    mask.set(*id);
  }
  std::lock_guard lock(registry_write_);
  if (!registry_.contains(client_id)) return error_response(404, "unknown_client", "client is not registered: " + client_id);
  const auto profile = registry_.update_relevant_intents(client_id, std::move(mask));
  persist();
  return {200, client_json(*profile)};
}

Response Service::get_client(const std::string& client_id) const {
  const auto profile = registry_.find(client_id);
  if (!profile) return error_response(404, "unknown_client", "client is not registered: " + client_id);
  return {200, client_json(*profile)};
}

Response Service::rebuild_list(const std::string& client_id, std::optional<std::string> coverage_text) {
  double coverage = 1.0;
  if (coverage_text) {
    try {
      std::size_t used = 0;
      coverage = std::stod(*coverage_text, &used);
      if (used != coverage_text->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      return error_response(400, "invalid_coverage", "coverage must be a number in (0, 1]");
    }
  }
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    return error_response(400, "invalid_coverage", "coverage must be a number in (0, 1]");
  }
  std::lock_guard lock(registry_write_);
  const auto current = registry_.find(client_id);
  if (!current) return error_response(404, "unknown_client", "client is not registered: " + client_id);
  const IntentHistogram hist = log_.replay(client_id, catalog_.size());
  if (hist.total() == 0) return error_response(409, "empty_history", "no logged predictions for " + client_id);
  RelevantIntentsMask mask = build_list(hist, coverage);
  // Rebuilding to the same list is a no-op, so replays are idempotent.
  auto profile = mask == current->relevant ? current : registry_.update_relevant_intents(client_id, std::move(mask));
  if (profile != current) persist();
  Response r{200, client_json(*profile)};
  r.body["coverage"] = coverage;
  r.body["history_size"] = hist.total();
  r.body["changed"] = profile != current;
  return r;
}

Response Service::health() const {
  Response r;
  r.body["status"] = "ok";
  r.body["model_fingerprint"] = fingerprint();
  r.body["num_intents"] = catalog_.size();
  r.body["clients"] = registry_.size();
  return r;
}

Response Service::handle(std::string_view method, std::string_view path,
                         const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    if (path == "/v1/health") {
      if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
      return health();
    }
    if (path == "/v1/predict") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      return predict(body);
    }
    constexpr std::string_view prefix = "/v1/clients/";
    if (path.starts_with(prefix)) {
      std::string_view rest = path.substr(prefix.size());
      const auto slash = rest.find('/');
      const std::string id(rest.substr(0, slash));
      const std::string_view tail = slash == std::string_view::npos ? "" : rest.substr(slash);
      if (id.empty()) return error_response(404, "no_route", "missing client id");
      if (tail.empty()) {
        if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
        return get_client(id);
      }
      if (tail == "/intents") {
        if (method != "PUT") return error_response(405, "method_not_allowed", "use PUT");
        return put_intents(id, body);
      }
      if (tail == "/rebuild-list") {
        if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
        const auto it = query.find("coverage");
        return rebuild_list(id, it == query.end() ? std::nullopt : std::optional(it->second));
      }
    }
    return error_response(404, "no_route", "no route for " + std::string(path));
  } catch (const Error& e) {
    return error_response(status_for(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

}  // namespace intentscale
