#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "intentscale/catalog.hpp"

namespace intentscale {

struct LabeledExample {
  std::string ticket_id;
  std::string client_id;
  std::string subject;
  std::string description;
  IntentId gold = 0;

  /// Subject and description joined by a single space.
  std::string text() const;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
};

/// Per-class proportional split into (train, validation). Per-class
/// validation counts are round(fraction * n_class), nudged by one on the
/// largest classes so the total equals round(fraction * N).
DatasetSplit stratified_split(std::span<const LabeledExample> examples, double validation_fraction,
                              std::uint64_t seed);

/// Three-way split: stratified test holdout, then stratified validation
/// carved out of the remainder.
DatasetSplit standard_split(std::span<const LabeledExample> examples, double test_fraction,
                            double validation_fraction, std::uint64_t seed);

/// Every ticket of a sampled client set goes to test; the rest is split by
/// stratified_split. Defaults target roughly 77.7 / 11.7 / 10.6 percent.
DatasetSplit ood_split(std::span<const LabeledExample> examples, double test_client_fraction = 0.106,
                       double validation_fraction = 0.117 / 0.894, std::uint64_t seed = 0);

/// Train and validation keep examples whose gold intent is in the industry;
/// test additionally requires the example's client to be assigned to it.
DatasetSplit industry_subset(const DatasetSplit& split, const Industry& industry, const ClientRegistry& clients);

struct SynthesisConfig {
  std::size_t num_intents = 60;
  std::size_t num_industries = 3;
  std::size_t intents_per_industry = 24;
  /// Fraction of each industry's intents shared by every industry.
  double industry_overlap_fraction = 0.25;
  std::size_t clients_per_industry = 40;
  std::size_t tickets_per_client = 333;
  double zipf_exponent = 1.1;
  /// Each client keeps a random share in [min_client_share, 1] of its
  /// industry's intents.
  double min_client_share = 0.6;
  /// Fraction of intents that belong to a near-duplicate pair spanning two
  /// industries.
  double confusable_pair_fraction = 0.5;
  std::size_t keywords_per_intent = 20;
  /// Keywords a confusable twin does not share with its partner; keeps the
  /// shared keyword mass at 1 - distinct/keywords_per_intent.
  std::size_t twin_distinct_keywords = 2;
  std::size_t noise_vocabulary = 400;
  /// Probability that a ticket token is an intent keyword rather than noise.
  double keyword_rate = 0.45;
  std::size_t min_tokens_per_ticket = 8;
  std::size_t max_tokens_per_ticket = 24;
  std::uint64_t seed = 7;

  /// Throws Error(invalid_argument) for inconsistent settings.
  void validate() const;
};

struct ConfusablePair {
  IntentId first;
  IntentId second;
};

struct SyntheticCorpus {
  IntentCatalog catalog;
  std::vector<Industry> industries;
  /// Registered clients (industry assigned, all-ones masks) in id order.
  ClientRegistry clients{0, {}};
  /// Intents each client actually draws tickets from.
  std::vector<RelevantIntentsMask> client_intents;
  std::vector<LabeledExample> examples;
  std::vector<ConfusablePair> confusable_pairs;
  /// Keyword vocabulary per intent (uniform keyword mass).
  std::vector<std::vector<std::string>> keywords;
};

SyntheticCorpus generate_corpus(const SynthesisConfig& config);

/// Line-delimited JSON, one ticket per line with fields ticket_id,
/// client_id, subject, description, gold_intent (label).
void save_examples(std::span<const LabeledExample> examples, const IntentCatalog& catalog,
                   const std::filesystem::path& path);
std::vector<LabeledExample> load_examples(const std::filesystem::path& path, const IntentCatalog& catalog);

/// Directory layout shared by the CLI: catalog.txt, industries.tsv,
/// clients.tsv, tickets.jsonl.
struct CorpusFiles {
  IntentCatalog catalog;
  std::vector<Industry> industries;
  ClientRegistry clients{0, {}};
  std::vector<LabeledExample> examples;
};

void save_corpus_dir(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
CorpusFiles load_corpus_dir(const std::filesystem::path& dir);

void save_split_dir(const DatasetSplit& split, const IntentCatalog& catalog, const std::filesystem::path& dir);
DatasetSplit load_split_dir(const std::filesystem::path& dir, const IntentCatalog& catalog);

}  // namespace intentscale
