#include "intentscale/experiments.hpp"

#include <chrono>
#include <cstdio>

#include "intentscale/error.hpp"

namespace intentscale {

namespace {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::vector<double> per_example_mean(const std::vector<std::vector<EvalRecord>>& per_seed) {
  std::vector<double> scores(per_seed.front().size(), 0.0);
  for (const auto& records : per_seed) {
    if (records.size() != scores.size()) throw Error(ErrorCode::shape_mismatch, "seed record sets differ in length");
    for (std::size_t i = 0; i < records.size(); ++i) scores[i] += records[i].correct ? 1.0 : 0.0;
  }
  for (double& s : scores) s /= static_cast<double>(per_seed.size());
  return scores;
}

void check_alignment(const std::vector<std::vector<EvalRecord>>& a, const std::vector<std::vector<EvalRecord>>& b) {
  const auto& x = a.front();
  const auto& y = b.front();
  if (x.size() != y.size()) throw Error(ErrorCode::invalid_argument, "record sets differ in length");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].ticket_id != y[i].ticket_id) throw Error(ErrorCode::invalid_argument, "record sets are not aligned");
  }
}

std::vector<EvalRecord> concat(std::vector<std::vector<EvalRecord>> parts) {
  std::vector<EvalRecord> out;
  for (auto& part : parts) out.insert(out.end(), part.begin(), part.end());
  return out;
}

}  // namespace

std::string describe(const ModelKey& key) {
  std::string s = key.split == SplitKind::standard ? "standard" : "ood";
  if (!key.industry.empty()) s += " industry=" + key.industry;
  if (key.intents) {
    s += " intents coverage=" + format_double(key.train_coverage) + " noise=" + format_double(key.noise);
  } else {
    s += " no-intents";
  }
  return s + " seed=" + std::to_string(key.seed);
}

ExperimentRunner::ExperimentRunner(CorpusFiles corpus, ExperimentConfig config)
    : corpus_(std::move(corpus)), config_(std::move(config)) {
  config_.grid.validate();
  config_.significance.validate();
  standard_ = standard_split(corpus_.examples, config_.test_fraction, config_.validation_fraction, config_.split_seed);
  ood_ = ood_split(corpus_.examples, 0.106, 0.117 / 0.894, config_.split_seed);
}

void ExperimentRunner::log(const std::string& message) const {
  if (config_.log) config_.log(message);
}

const DatasetSplit& ExperimentRunner::split(SplitKind kind) const {
  return kind == SplitKind::standard ? standard_ : ood_;
}

const DatasetSplit& ExperimentRunner::industry_split(const std::string& industry) {
  auto it = industry_splits_.find(industry);
  if (it == industry_splits_.end()) {
    const Industry& ind = corpus_.clients.industry(industry);
    it = industry_splits_.emplace(industry, industry_subset(standard_, ind, corpus_.clients)).first;
  }
  return it->second;
}

const ClientHistories& ExperimentRunner::histories(SplitKind kind) {
  if (auto it = histories_.find(kind); it != histories_.end()) return it->second;
  const DatasetSplit& s = split(kind);
  const std::size_t num_intents = corpus_.catalog.size();
  // A client's history is its training tickets; held-out clients of the
  // OOD split only have their own (test) tickets.
  std::vector<LabeledExample> pool = s.train;
  if (kind == SplitKind::ood) pool.insert(pool.end(), s.test.begin(), s.test.end());

  ClientHistories result;
  if (config_.history == HistorySource::gold) {
    result = histories_from_examples(pool, num_intents);
  } else {
    const ModelBundle& production = model({kind, false, 1.0, 0.0, 0, ""});
    std::vector<std::string> texts;
    std::vector<RelevantIntentsMask> masks;
    for (const auto& e : pool) {
      texts.push_back(e.text());
      masks.push_back(RelevantIntentsMask::all(num_intents));
    }
    const auto predictions = predict_batch(production, texts, masks, masks, FilterMode::none);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      auto [it, inserted] = result.try_emplace(pool[i].client_id, num_intents);
      it->second.add(predictions[i].top1);
    }
  }
  return histories_.emplace(kind, std::move(result)).first->second;
}

const ClientRegistry& ExperimentRunner::registry(SplitKind kind, double coverage) {
  const auto key = std::make_pair(kind, coverage);
  if (auto it = registries_.find(key); it != registries_.end()) return *it->second;
  const auto ids = corpus_.clients.client_ids();
  const auto masks = build_all(histories(kind), ids, corpus_.catalog.size(), coverage);
  auto reg = std::make_unique<ClientRegistry>(registry_with_masks(corpus_.clients, masks));
  return *registries_.emplace(key, std::move(reg)).first->second;
}

const ModelBundle& ExperimentRunner::model(const ModelKey& key) {
  if (auto it = models_.find(key); it != models_.end()) return *it->second;
  ModelConfig cfg = config_.model;
  cfg.head.use_intents_feature = key.intents;
  cfg.train.noise_rate = key.intents ? key.noise : 0.0;
  cfg.train.seed = config_.model.train.seed + key.seed;

  const DatasetSplit& data = key.industry.empty() ? split(key.split) : industry_split(key.industry);
  // Models without the intents feature never read masks.
  const ClientRegistry& clients = key.intents ? registry(key.split, key.train_coverage) : corpus_.clients;
  const auto start = std::chrono::steady_clock::now();
  auto bundle = std::make_unique<ModelBundle>(train(data, clients, corpus_.catalog, cfg));
  ++trainings_;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[96];
  std::snprintf(buf, sizeof buf, " | epochs %zu, best %zu, %.1fs", bundle->log.size(), bundle->best_epoch, seconds);
  log("trained " + describe(key) + buf);
  return *models_.emplace(key, std::move(bundle)).first->second;
}

namespace {

struct Scored {
  std::vector<EvalRecord> records;
  bool dominance_ok = true;
};

Scored score(const ModelBundle& model, std::span<const LabeledExample> examples,
             std::span<const RelevantIntentsMask> feature_masks, std::span<const RelevantIntentsMask> filter_masks,
             FilterMode mode) {
  std::vector<std::string> texts;
  texts.reserve(examples.size());
  for (const auto& e : examples) texts.push_back(e.text());
  const auto chosen = predict_batch(model, texts, feature_masks, filter_masks, mode);
  Scored out;
  out.records = make_records(examples, chosen);
  if (mode != FilterMode::none && !examples.empty()) {
    const FilterMode other = mode == FilterMode::strict ? FilterMode::search : FilterMode::strict;
    const auto alt = make_records(examples, predict_batch(model, texts, feature_masks, filter_masks, other));
    const double a = accuracy(out.records);
    const double b = accuracy(alt);
    out.dominance_ok = mode == FilterMode::search ? a >= b : b >= a;
  }
  return out;
}

}  // namespace

std::vector<EvalRecord> ExperimentRunner::evaluate(const ModelKey& key, double test_coverage, FilterMode mode) {
  const ModelBundle& m = model(key);
  const ClientRegistry& reg = registry(key.split, test_coverage);
  const auto& test = split(key.split).test;
  std::vector<RelevantIntentsMask> masks;
  masks.reserve(test.size());
  for (const auto& e : test) masks.push_back(reg.get(e.client_id)->relevant);
  Scored scored = score(m, test, masks, masks, mode);
  if (mode != FilterMode::none) {
    ++dominance_checks_;
    if (!scored.dominance_ok) ++dominance_violations_;
  }
  return std::move(scored.records);
}

GridResult ExperimentRunner::grid(std::string name, std::string row_label, const std::vector<double>& row_keys,
                                  const std::function<ModelKey(double, std::size_t)>& key_of) {
  const auto& spec = config_.grid;
  GridResult result;
  result.name = std::move(name);
  result.row_label = std::move(row_label);
  result.row_keys = row_keys;
  result.col_keys = spec.test_coverages;
  result.cells.assign(row_keys.size(), std::vector<GridCell>(spec.test_coverages.size()));

  for (std::size_t c = 0; c < spec.test_coverages.size(); ++c) {
    const double coverage = spec.test_coverages[c];
    std::vector<std::vector<EvalRecord>> baseline;
    std::vector<double> baseline_acc;
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      baseline.push_back(evaluate({SplitKind::standard, false, 1.0, 0.0, s, ""}, coverage, config_.filter));
      baseline_acc.push_back(accuracy(baseline.back()));
    }
    result.baseline_mean.push_back(mean_of(baseline_acc));
    result.baseline_stddev.push_back(stddev_of(baseline_acc));
    result.baseline_seed_accuracy.push_back(baseline_acc);
    const auto baseline_scores = per_example_mean(baseline);

    for (std::size_t r = 0; r < row_keys.size(); ++r) {
      GridCell& cell = result.cells[r][c];
      std::vector<std::vector<EvalRecord>> rows;
      for (std::size_t s = 0; s < spec.seeds; ++s) {
        rows.push_back(evaluate(key_of(row_keys[r], s), coverage, config_.filter));
        cell.seed_accuracy.push_back(accuracy(rows.back()));
        cell.seed_delta.push_back(cell.seed_accuracy.back() - baseline_acc[s]);
      }
      check_alignment(rows, baseline);
      cell.mean_delta = mean_of(cell.seed_delta);
      cell.stddev = stddev_of(cell.seed_delta);
      const auto sig = paired_significance(per_example_mean(rows), baseline_scores, config_.significance);
      cell.p_value = sig.p_value;
      cell.significant = sig.significant;
    }
  }
  return result;
}

GridResult ExperimentRunner::coverage_grid() {
  return grid("coverage", "train_coverage", config_.grid.train_coverages, [](double coverage, std::size_t seed) {
    return ModelKey{SplitKind::standard, true, coverage, 0.0, seed, ""};
  });
}

GridResult ExperimentRunner::noise_grid() {
  const double fixed = config_.grid.fixed_train_coverage;
  return grid("noise", "train_noise", config_.grid.noise_rates, [fixed](double noise, std::size_t seed) {
    return ModelKey{SplitKind::standard, true, fixed, noise, seed, ""};
  });
}

TableCell ExperimentRunner::table_cell(const std::vector<std::vector<EvalRecord>>& per_seed,
                                       const std::vector<std::vector<EvalRecord>>* reference) {
  TableCell cell;
  for (const auto& records : per_seed) cell.seed_values.push_back(accuracy(records));
  cell.mean = mean_of(cell.seed_values);
  cell.stddev = stddev_of(cell.seed_values);
  if (reference != nullptr && reference != &per_seed) {
    check_alignment(per_seed, *reference);
    const auto sig =
        paired_significance(per_example_mean(per_seed), per_example_mean(*reference), config_.significance);
    cell.p_value = sig.p_value;
    cell.significant = sig.significant;
  }
  return cell;
}

AccuracyTable ExperimentRunner::ood_experiment(double noise) {
  const auto& spec = config_.grid;
  AccuracyTable table;
  table.name = "ood";
  table.rows = {"baseline", "intents_no_noise", "intents_noise"};
  table.cols = {"in_domain", "out_of_domain"};
  table.cells.assign(table.rows.size(), std::vector<std::optional<TableCell>>(table.cols.size()));

  const SplitKind kinds[] = {SplitKind::standard, SplitKind::ood};
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<std::vector<std::vector<EvalRecord>>> rows(table.rows.size());
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      const ModelKey keys[] = {
          {kinds[c], false, 1.0, 0.0, s, ""},
          {kinds[c], true, spec.fixed_train_coverage, 0.0, s, ""},
          {kinds[c], true, spec.fixed_train_coverage, noise, s, ""},
      };
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        // Concatenating the per-coverage record sets averages accuracy over
        // test coverages (all parts have the same length).
        std::vector<std::vector<EvalRecord>> parts;
        for (double coverage : spec.test_coverages) parts.push_back(evaluate(keys[r], coverage, config_.filter));
        rows[r].push_back(concat(std::move(parts)));
      }
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) table.cells[r][c] = table_cell(rows[r], &rows[0]);
  }
  return table;
}

AccuracyTable ExperimentRunner::industry_experiment() {
  const auto& spec = config_.grid;
  const auto& industries = corpus_.industries;
  AccuracyTable table;
  table.name = "industry";
  table.rows = {"industry_specific", "generic", "generic_with_search"};
  table.cols = {"generic"};
  for (const auto& ind : industries) table.cols.push_back(ind.name);
  table.cells.assign(table.rows.size(), std::vector<std::optional<TableCell>>(table.cols.size()));

  const ClientRegistry& full = registry(SplitKind::standard, 1.0);
  const auto client_masks = [&](std::span<const LabeledExample> examples) {
    std::vector<RelevantIntentsMask> masks;
    for (const auto& e : examples) masks.push_back(full.get(e.client_id)->relevant);
    return masks;
  };
  const auto track = [&](Scored scored, FilterMode mode) {
    if (mode != FilterMode::none) {
      ++dominance_checks_;
      if (!scored.dominance_ok) ++dominance_violations_;
    }
    return std::move(scored.records);
  };

  for (std::size_t c = 0; c < table.cols.size(); ++c) {
    const bool generic_set = c == 0;
    const auto& test = generic_set ? standard_.test : industry_split(industries[c - 1].name).test;
    if (test.empty()) continue;
    const auto features = client_masks(test);
    std::vector<RelevantIntentsMask> filters = features;
    if (!generic_set) filters.assign(test.size(), industries[c - 1].intents);

    std::vector<std::vector<std::vector<EvalRecord>>> rows(table.rows.size());
    for (std::size_t s = 0; s < spec.seeds; ++s) {
      const ModelBundle& generic = model({SplitKind::standard, false, 1.0, 0.0, s, ""});
      rows[1].push_back(track(score(generic, test, features, filters, FilterMode::none), FilterMode::none));
      rows[2].push_back(track(score(generic, test, features, filters, FilterMode::search), FilterMode::search));
      if (!generic_set) {
        const ModelBundle& specific = model({SplitKind::standard, false, 1.0, 0.0, s, industries[c - 1].name});
        rows[0].push_back(track(score(specific, test, features, filters, FilterMode::search), FilterMode::search));
      }
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!rows[r].empty()) table.cells[r][c] = table_cell(rows[r], &rows[1]);
    }
  }
  return table;
}

}  // namespace intentscale
