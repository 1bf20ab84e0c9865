#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentscale/catalog.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/lists.hpp"
#include "intentscale/model.hpp"

namespace intentscale {

struct ServiceConfig {
  std::string bind = "127.0.0.1:8080";
  std::filesystem::path model;
  std::filesystem::path registry;
  std::filesystem::path catalog;
  /// Prediction log (JSONL); empty keeps the log in memory only.
  std::filesystem::path log;
  std::size_t top_k = 5;
  /// Log the unfiltered top-1 instead of the served (chosen) intent.
  bool log_top1 = false;
  /// Write the registry back to `registry` after every change.
  bool persist_registry = false;
};

/// INTENTSCALE_BIND, INTENTSCALE_MODEL, INTENTSCALE_REGISTRY,
/// INTENTSCALE_CATALOG and INTENTSCALE_LOG replace the matching fields.
void apply_env_overrides(ServiceConfig& config);

struct LogRecord {
  std::string timestamp;  // UTC, ISO 8601 with milliseconds
  std::string client_id;
  std::optional<IntentId> intent;  // absent when the request abstained
  std::uint64_t mask_version = 0;
};

/// Append-only prediction history, optionally mirrored to a JSONL file.
class PredictionLog {
 public:
  PredictionLog() = default;
  /// Loads existing records from `path` (if present) and appends to it.
  PredictionLog(std::filesystem::path path, const IntentCatalog& catalog);

  void append(LogRecord record, const IntentCatalog& catalog);
  std::vector<LogRecord> records() const;
  std::size_t size() const;
  /// Logged intents of one client (abstentions skipped).
  IntentHistogram replay(std::string_view client_id, std::size_t num_intents) const;

 private:
  mutable std::mutex mutex_;
  std::filesystem::path path_;
  std::vector<LogRecord> records_;
};

struct Response {
  int status = 200;
  nlohmann::ordered_json body;
};

/// Request handling independent of the HTTP transport. The model is
/// immutable; only client masks change while serving.
class Service {
 public:
  /// Throws Error(fingerprint_mismatch) if the catalog is not the one the
  /// model was trained with.
  Service(ModelBundle model, IntentCatalog catalog, ClientRegistry registry, ServiceConfig config = {});

  /// Loads model, catalog and registry from the configured paths.
  static std::unique_ptr<Service> load(const ServiceConfig& config);

  Response predict(const std::string& body);
  Response put_intents(const std::string& client_id, const std::string& body);
  Response get_client(const std::string& client_id) const;
  Response rebuild_list(const std::string& client_id, std::optional<std::string> coverage);
  Response health() const;

  /// Routes a request by method and path.
  Response handle(std::string_view method, std::string_view path,
                  const std::map<std::string, std::string>& query, const std::string& body);

  const ClientRegistry& registry() const noexcept { return registry_; }
  const PredictionLog& log() const noexcept { return log_; }
  const ModelBundle& model() const noexcept { return model_; }
  std::string fingerprint() const;

 private:
  nlohmann::ordered_json client_json(const ClientProfile& profile) const;
  void persist();

  ModelBundle model_;
  IntentCatalog catalog_;
  ClientRegistry registry_;
  ServiceConfig config_;
  PredictionLog log_;
  std::mutex registry_write_;
  std::atomic<std::uint64_t> requests_{0};
};

Response error_response(int status, std::string_view code, std::string_view message);

/// Blocks serving HTTP on `bind` (host:port) until `stop` is set or the
/// process ends. `on_listening` receives the bound port.
void run_http(Service& service, const std::string& bind, const std::atomic<bool>* stop = nullptr,
              const std::function<void(int)>& on_listening = {});

}  // namespace intentscale
