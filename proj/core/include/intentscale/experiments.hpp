#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "intentscale/corpus.hpp"
#include "intentscale/eval.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/lists.hpp"
#include "intentscale/trainer.hpp"

namespace intentscale {

enum class SplitKind { standard, ood };

/// Where list histories come from.
enum class HistorySource { gold, predictions };

struct ExperimentConfig {
  ModelConfig model;
  GridSpec grid;
  SignificanceConfig significance;
  double test_fraction = 0.15;
  double validation_fraction = 0.15;
  std::uint64_t split_seed = 0;
  /// Filter applied in the coverage and noise grids.
  FilterMode filter = FilterMode::strict;
  HistorySource history = HistorySource::gold;
  std::function<void(const std::string&)> log;
};

/// Identifies one trained model. Seed index s trains with
/// model.train.seed + s.
struct ModelKey {
  SplitKind split = SplitKind::standard;
  bool intents = false;
  double train_coverage = 1.0;
  double noise = 0.0;
  std::size_t seed = 0;
  std::string industry;  // non-empty: industry-specific model

  auto tie() const { return std::tie(split, intents, train_coverage, noise, seed, industry); }
  bool operator<(const ModelKey& other) const { return tie() < other.tie(); }
};

std::string describe(const ModelKey& key);

/// Trains, caches and evaluates the models behind the grids and tables.
class ExperimentRunner {
 public:
  ExperimentRunner(CorpusFiles corpus, ExperimentConfig config);

  const ExperimentConfig& config() const noexcept { return config_; }
  const CorpusFiles& corpus() const noexcept { return corpus_; }
  const DatasetSplit& split(SplitKind kind) const;

  /// Per-client masks for a split at a coverage; built once and cached.
  const ClientRegistry& registry(SplitKind kind, double coverage);

  const ModelBundle& model(const ModelKey& key);

  /// Test-set records of `key` with feature and filter masks at
  /// `test_coverage`.
  std::vector<EvalRecord> evaluate(const ModelKey& key, double test_coverage, FilterMode mode);

  GridResult coverage_grid();
  /// Rows are noise rates at fixed_train_coverage; the k=0 row reuses the
  /// coverage grid's models.
  GridResult noise_grid();
  /// Rows baseline / intents_no_noise / intents_noise, columns in_domain
  /// and out_of_domain, each averaged over the test coverages.
  AccuracyTable ood_experiment(double noise = 0.05);
  /// Rows industry_specific / generic / generic_with_search, columns
  /// generic plus one per industry.
  AccuracyTable industry_experiment();

  std::size_t trainings() const noexcept { return trainings_; }
  /// Evaluations where search accuracy fell below strict accuracy.
  std::size_t dominance_violations() const noexcept { return dominance_violations_; }
  std::size_t dominance_checks() const noexcept { return dominance_checks_; }

 private:
  void log(const std::string& message) const;
  const ClientHistories& histories(SplitKind kind);
  const DatasetSplit& industry_split(const std::string& industry);
  GridResult grid(std::string name, std::string row_label, const std::vector<double>& row_keys,
                  const std::function<ModelKey(double, std::size_t)>& key_of);
  TableCell table_cell(const std::vector<std::vector<EvalRecord>>& per_seed,
                       const std::vector<std::vector<EvalRecord>>* reference);

  CorpusFiles corpus_;
  ExperimentConfig config_;
  DatasetSplit standard_;
  DatasetSplit ood_;
  std::map<std::string, DatasetSplit> industry_splits_;
  std::map<std::pair<SplitKind, double>, std::unique_ptr<ClientRegistry>> registries_;
  std::map<SplitKind, ClientHistories> histories_;
  std::map<ModelKey, std::unique_ptr<ModelBundle>> models_;
  std::size_t trainings_ = 0;
  std::size_t dominance_checks_ = 0;
  std::size_t dominance_violations_ = 0;
};

}  // namespace intentscale
