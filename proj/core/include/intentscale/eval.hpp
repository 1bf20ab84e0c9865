#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "intentscale/catalog.hpp"
#include "intentscale/corpus.hpp"
#include "intentscale/inference.hpp"

namespace intentscale {

struct EvalRecord {
  std::string ticket_id;
  IntentId gold = 0;
  std::optional<IntentId> chosen;
  bool correct = false;  // chosen present and equal to gold
};

std::vector<EvalRecord> make_records(std::span<const LabeledExample> examples,
                                     std::span<const PredictionResult> predictions);

/// Mean of correct flags; abstentions count as wrong.
double accuracy(std::span<const EvalRecord> records);

struct SignificanceConfig {
  std::size_t num_subsets = 1000;
  double subset_fraction = 0.5;
  double alpha = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SignificanceResult {
  double mean_delta = 0.0;  // mean over subsets of score(A) - score(B)
  double t_statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

/// Paired t-test over random subsets (drawn without replacement, size
/// ceil(fraction * N)) of per-example scores. Two-sided p from Student's t
/// with num_subsets - 1 degrees of freedom.
SignificanceResult paired_significance(std::span<const double> scores_a, std::span<const double> scores_b,
                                       const SignificanceConfig& config);

/// Record form; throws Error(invalid_argument) unless both sides list the
/// same ticket ids in the same order.
SignificanceResult paired_significance(std::span<const EvalRecord> a, std::span<const EvalRecord> b,
                                       const SignificanceConfig& config);

/// Two-sided p-value of a t statistic.
double students_t_two_sided_p(double t, double degrees_of_freedom);

struct GridSpec {
  std::vector<double> train_coverages{1.00, 0.99, 0.98, 0.97, 0.96};
  std::vector<double> test_coverages{1.00, 0.99, 0.98, 0.97, 0.96};
  std::vector<double> noise_rates{0.00, 0.05, 0.10, 0.20, 0.50};
  double fixed_train_coverage = 0.98;
  std::size_t seeds = 4;

  void validate() const;
};

struct GridCell {
  double mean_delta = 0.0;
  double stddev = 0.0;
  double p_value = 1.0;
  bool significant = false;
  std::vector<double> seed_delta;     // accuracy - baseline accuracy, per seed
  std::vector<double> seed_accuracy;  // absolute accuracy, per seed
};

/// Rows of deltas against a baseline row, one column per test coverage.
struct GridResult {
  std::string name;       // "coverage" or "noise"
  std::string row_label;  // "train_coverage" or "train_noise"
  std::vector<double> row_keys;
  std::vector<double> col_keys;
  std::vector<double> baseline_mean;
  std::vector<double> baseline_stddev;
  std::vector<std::vector<double>> baseline_seed_accuracy;  // [col][seed]
  std::vector<std::vector<GridCell>> cells;                 // [row][col]

  double row_average(std::size_t row) const;
  double baseline_average() const;
  double overall_average() const;
};

std::string format_grid(const GridResult& grid);
/// One JSON record per cell (and per baseline cell), keys: grid, row,
/// column, mean, stddev, p_value, significant.
void write_grid_records(const GridResult& grid, std::ostream& out);

/// Generic accuracy table: rows x columns of seed-averaged accuracies.
struct TableCell {
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<double> p_value;  // against the table's reference row
  bool significant = false;
  std::vector<double> seed_values;
};

struct AccuracyTable {
  std::string name;
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<std::vector<std::optional<TableCell>>> cells;  // [row][col]

  const TableCell& at(std::string_view row, std::string_view col) const;
};

std::string format_table(const AccuracyTable& table);
void write_table_records(const AccuracyTable& table, std::ostream& out);

double mean_of(std::span<const double> values);
/// Sample standard deviation; 0 for fewer than two values.
double stddev_of(std::span<const double> values);

}  // namespace intentscale
