#include "intentscale/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "intentscale/error.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

std::vector<EvalRecord> make_records(std::span<const LabeledExample> examples,
                                     std::span<const PredictionResult> predictions) {
  if (examples.size() != predictions.size()) throw Error(ErrorCode::shape_mismatch, "examples and predictions must align");
  std::vector<EvalRecord> records;
  records.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& chosen = predictions[i].chosen;
    records.push_back({examples[i].ticket_id, examples[i].gold, chosen, chosen && *chosen == examples[i].gold});
  }
  return records;
}

double accuracy(std::span<const EvalRecord> records) {
  if (records.empty()) throw Error(ErrorCode::invalid_argument, "accuracy of an empty record set");
  const auto correct = std::count_if(records.begin(), records.end(), [](const EvalRecord& r) { return r.correct; });
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

void SignificanceConfig::validate() const {
  if (num_subsets < 2) throw Error(ErrorCode::invalid_argument, "need at least 2 subsets");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "subset fraction must lie in (0, 1]");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
}

double students_t_two_sided_p(double t, double degrees_of_freedom) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(degrees_of_freedom);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

SignificanceResult paired_significance(std::span<const double> scores_a, std::span<const double> scores_b,
                                       const SignificanceConfig& config) {
  config.validate();
  if (scores_a.size() != scores_b.size()) throw Error(ErrorCode::invalid_argument, "paired inputs differ in length");
  if (scores_a.empty()) throw Error(ErrorCode::invalid_argument, "paired test on empty inputs");

  const std::size_t n = scores_a.size();
  const auto subset_size = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(config.subset_fraction * static_cast<double>(n) - 1e-9)), 1, n);
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = scores_a[i] - scores_b[i];

  Rng rng(config.seed);
  std::vector<std::size_t> index(n);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<double> deltas(config.num_subsets);
  for (auto& delta : deltas) {
    // Partial Fisher-Yates: the first subset_size slots are a uniform
    // sample without replacement.
    double sum = 0.0;
    for (std::size_t k = 0; k < subset_size; ++k) {
      std::swap(index[k], index[k + rng.below(n - k)]);
      sum += diff[index[k]];
    }
    delta = sum / static_cast<double>(subset_size);
  }

  SignificanceResult result;
  result.mean_delta = mean_of(deltas);
  const bool all_zero = std::all_of(deltas.begin(), deltas.end(), [](double d) { return d == 0.0; });
  if (all_zero) {
    result.p_value = 1.0;
    return result;
  }
  const double sd = stddev_of(deltas);
  const double se = sd / std::sqrt(static_cast<double>(deltas.size()));
  if (se == 0.0) {
    result.t_statistic = std::copysign(std::numeric_limits<double>::infinity(), result.mean_delta);
    result.p_value = 0.0;
  } else {
    result.t_statistic = result.mean_delta / se;
    result.p_value = students_t_two_sided_p(result.t_statistic, static_cast<double>(deltas.size() - 1));
  }
  result.significant = result.p_value < config.alpha;
  return result;
}

SignificanceResult paired_significance(std::span<const EvalRecord> a, std::span<const EvalRecord> b,
                                       const SignificanceConfig& config) {
  if (a.size() != b.size()) throw Error(ErrorCode::invalid_argument, "record sets differ in length");
  std::vector<double> sa(a.size());
  std::vector<double> sb(b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].ticket_id != b[i].ticket_id) {
      throw Error(ErrorCode::invalid_argument, "record sets are not aligned at position " + std::to_string(i));
    }
    sa[i] = a[i].correct ? 1.0 : 0.0;
    sb[i] = b[i].correct ? 1.0 : 0.0;
  }
  return paired_significance(sa, sb, config);
}

void GridSpec::validate() const {
  if (train_coverages.empty() || test_coverages.empty() || noise_rates.empty() || seeds == 0) {
    throw Error(ErrorCode::invalid_argument, "grid sets must be non-empty");
  }
  const auto check_coverage = [](double c) {
    if (!(c > 0.0 && c <= 1.0)) throw Error(ErrorCode::invalid_argument, "coverage must lie in (0, 1]");
  };
  for (double c : train_coverages) check_coverage(c);
  for (double c : test_coverages) check_coverage(c);
  check_coverage(fixed_train_coverage);
  for (double k : noise_rates) {
    if (!(k >= 0.0 && k <= 1.0)) throw Error(ErrorCode::invalid_argument, "noise rate must lie in [0, 1]");
  }
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stddev_of(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double GridResult::row_average(std::size_t row) const {
  std::vector<double> values;
  for (const auto& cell : cells.at(row)) values.push_back(cell.mean_delta);
  return mean_of(values);
}

double GridResult::baseline_average() const { return mean_of(baseline_mean); }

double GridResult::overall_average() const {
  std::vector<double> values;
  for (std::size_t r = 0; r < cells.size(); ++r) values.push_back(row_average(r));
  return mean_of(values);
}

namespace {

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%5.1f%%", 100.0 * fraction);
  return buf;
}

std::string pp(double delta, bool significant) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%+5.1fpp", significant ? "*" : " ", 100.0 * delta);
  return buf;
}

std::string key(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  if (s.size() >= width) return s;
  return s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string format_grid(const GridResult& grid) {
  constexpr std::size_t kFirst = 22;
  constexpr std::size_t kCol = 10;
  std::ostringstream out;
  out << pad_right(grid.row_label, kFirst);
  for (double c : grid.col_keys) out << pad(key(c), kCol);
  out << pad("average", kCol) << '\n';
  out << pad_right("baseline", kFirst);
  for (double acc : grid.baseline_mean) out << pad(percent(acc), kCol);
  out << pad(percent(grid.baseline_average()), kCol) << '\n';
  for (std::size_t r = 0; r < grid.row_keys.size(); ++r) {
    out << pad_right(key(grid.row_keys[r]), kFirst);
    for (const auto& cell : grid.cells[r]) out << pad(pp(cell.mean_delta, cell.significant), kCol);
    out << pad(pp(grid.row_average(r), false), kCol) << '\n';
  }
  out << "(* = p < alpha against the baseline at the same test coverage)\n";
  return out.str();
}

void write_grid_records(const GridResult& grid, std::ostream& out) {
  for (std::size_t c = 0; c < grid.col_keys.size(); ++c) {
    nlohmann::ordered_json record;
    record["grid"] = grid.name;
    record["row"] = "baseline";
    record["column"] = grid.col_keys[c];
    record["mean"] = grid.baseline_mean[c];
    record["stddev"] = grid.baseline_stddev[c];
    record["p_value"] = nullptr;
    record["significant"] = false;
    out << record.dump() << '\n';
  }
  for (std::size_t r = 0; r < grid.row_keys.size(); ++r) {
    for (std::size_t c = 0; c < grid.col_keys.size(); ++c) {
      const auto& cell = grid.cells[r][c];
      nlohmann::ordered_json record;
      record["grid"] = grid.name;
      record["row"] = grid.row_keys[r];
      record["column"] = grid.col_keys[c];
      record["mean"] = cell.mean_delta;
      record["stddev"] = cell.stddev;
      record["p_value"] = cell.p_value;
      record["significant"] = cell.significant;
      out << record.dump() << '\n';
    }
  }
}

const TableCell& AccuracyTable::at(std::string_view row, std::string_view col) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(cols.begin(), cols.end(), col);
  if (r == rows.end() || c == cols.end()) throw Error(ErrorCode::not_found, "no such table cell");
  const auto& cell = cells[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - cols.begin())];
  if (!cell) throw Error(ErrorCode::not_found, "table cell is empty");
  return *cell;
}

std::string format_table(const AccuracyTable& table) {
  std::size_t first = 8;
  for (const auto& r : table.rows) first = std::max(first, r.size() + 2);
  std::size_t col = 10;
  for (const auto& c : table.cols) col = std::max(col, c.size() + 2);
  std::ostringstream out;
  out << pad_right(table.name, first);
  for (const auto& c : table.cols) out << pad(c, col);
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    out << pad_right(table.rows[r], first);
    for (const auto& cell : table.cells[r]) {
      if (!cell) {
        out << pad("--", col);
        continue;
      }
      out << pad((cell->significant ? "*" : "") + percent(cell->mean), col);
    }
    out << '\n';
  }
  out << "(* = p < alpha against the reference row)\n";
  return out.str();
}

void write_table_records(const AccuracyTable& table, std::ostream& out) {
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < table.cols.size(); ++c) {
      const auto& cell = table.cells[r][c];
      if (!cell) continue;
      nlohmann::ordered_json record;
      record["table"] = table.name;
      record["row"] = table.rows[r];
      record["column"] = table.cols[c];
      record["mean"] = cell->mean;
      record["stddev"] = cell->stddev;
      record["p_value"] = cell->p_value ? nlohmann::ordered_json(*cell->p_value) : nlohmann::ordered_json(nullptr);
      record["significant"] = cell->significant;
      out << record.dump() << '\n';
    }
  }
}

}  // namespace intentscale
