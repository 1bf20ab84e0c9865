#include "intentscale/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "intentscale/error.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

std::string LabeledExample::text() const { return subject + " " + description; }

namespace {

/// Splits `examples` per class. Classes below two examples either raise
/// (strict) or stay entirely in train.
DatasetSplit stratified_impl(std::span<const LabeledExample> examples, double fraction, std::uint64_t seed,
                             bool strict) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "validation fraction must lie in (0, 1)");
  }
  std::map<IntentId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < examples.size(); ++i) by_class[examples[i].gold].push_back(i);

  struct ClassQuota {
    IntentId id;
    std::size_t size;
    std::size_t take;
    std::size_t lo;
    std::size_t hi;
  };
  std::vector<ClassQuota> quotas;
  std::size_t eligible_total = 0;
  for (const auto& [id, members] : by_class) {
    const std::size_t n = members.size();
    if (n < 2) {
      if (strict) {
        throw Error(ErrorCode::invalid_argument,
                    "intent " + std::to_string(id) + " has fewer than 2 examples; cannot stratify");
      }
      continue;
    }
    const double exact = fraction * static_cast<double>(n);
    const auto lo = static_cast<std::size_t>(std::floor(exact));
    const auto hi = static_cast<std::size_t>(std::ceil(exact));
    quotas.push_back({id, n, static_cast<std::size_t>(std::llround(exact)), lo, hi});
    eligible_total += n;
  }

  // Nudge counts by one on the largest classes (ties: smaller id) so the
  // total matches round(fraction * N); every count stays at floor or ceil.
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(eligible_total)));
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].size > quotas[b].size; });
  std::size_t total = 0;
  for (const auto& q : quotas) total += q.take;
  for (std::size_t idx : order) {
    if (total == target) break;
    auto& q = quotas[idx];
    if (total < target && q.take < q.hi) {
      ++q.take;
      ++total;
    } else if (total > target && q.take > q.lo) {
      --q.take;
      --total;
    }
  }

  std::vector<bool> to_validation(examples.size(), false);
  Rng rng(seed);
  for (const auto& q : quotas) {
    auto members = by_class.at(q.id);
    rng.shuffle(std::span(members));
    for (std::size_t k = 0; k < q.take; ++k) to_validation[members[k]] = true;
  }

  DatasetSplit split;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (to_validation[i] ? split.validation : split.train).push_back(examples[i]);
  }
  return split;
}

/// Short pronounceable words; the tokenizer keeps them intact.
std::string make_word(Rng& rng) {
  static constexpr std::string_view consonants = "bcdfghjklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  const std::size_t syllables = 2 + rng.below(2);
  std::string word;
  for (std::size_t s = 0; s < syllables; ++s) {
    word += consonants[rng.below(consonants.size())];
    word += vowels[rng.below(vowels.size())];
  }
  return word;
}

std::vector<std::string> make_vocabulary(Rng& rng, std::size_t count, std::unordered_set<std::string>& used) {
  std::vector<std::string> words;
  words.reserve(count);
  while (words.size() < count) {
    auto word = make_word(rng);
    if (used.insert(word).second) words.push_back(std::move(word));
  }
  return words;
}

std::string industry_name(std::size_t index) {
  static const char* kNames[] = {"software", "ecommerce", "finance", "healthcare", "travel", "education"};
  if (index < std::size(kNames)) return kNames[index];
  return "industry_" + std::to_string(index);
}

std::string padded(std::string_view prefix, std::size_t value, int width) {
  auto digits = std::to_string(value);
  if (digits.size() < static_cast<std::size_t>(width)) digits.insert(0, width - digits.size(), '0');
  return std::string(prefix) + digits;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  return in;
}

}  // namespace

DatasetSplit stratified_split(std::span<const LabeledExample> examples, double validation_fraction,
                              std::uint64_t seed) {
  return stratified_impl(examples, validation_fraction, seed, true);
}

DatasetSplit standard_split(std::span<const LabeledExample> examples, double test_fraction,
                            double validation_fraction, std::uint64_t seed) {
  auto outer = stratified_impl(examples, test_fraction, derive_seed(seed, 1), true);
  auto inner = stratified_impl(outer.train, validation_fraction, derive_seed(seed, 2), false);
  inner.test = std::move(outer.validation);
  return inner;
}

DatasetSplit ood_split(std::span<const LabeledExample> examples, double test_client_fraction,
                       double validation_fraction, std::uint64_t seed) {
  if (!(test_client_fraction > 0.0 && test_client_fraction < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "test client fraction must lie in (0, 1)");
  }
  std::set<std::string> unique;
  for (const auto& ex : examples) unique.insert(ex.client_id);
  if (unique.size() < 3) throw Error(ErrorCode::invalid_argument, "ood split needs at least 3 clients");

  std::vector<std::string> clients(unique.begin(), unique.end());
  Rng rng(derive_seed(seed, 3));
  rng.shuffle(std::span(clients));
  const auto wanted = static_cast<std::size_t>(std::llround(test_client_fraction * static_cast<double>(clients.size())));
  const std::size_t n_test = std::clamp<std::size_t>(wanted, 1, clients.size() - 2);
  const std::unordered_set<std::string> held_out(clients.begin(), clients.begin() + static_cast<std::ptrdiff_t>(n_test));

  std::vector<LabeledExample> rest;
  std::vector<LabeledExample> test;
  for (const auto& ex : examples) (held_out.contains(ex.client_id) ? test : rest).push_back(ex);

  auto split = stratified_impl(rest, validation_fraction, derive_seed(seed, 4), false);
  split.test = std::move(test);
  return split;
}

DatasetSplit industry_subset(const DatasetSplit& split, const Industry& industry, const ClientRegistry& clients) {
  const auto in_industry = [&](const LabeledExample& ex) {
    return ex.gold < industry.intents.size() && industry.intents.test(ex.gold);
  };
  DatasetSplit out;
  std::copy_if(split.train.begin(), split.train.end(), std::back_inserter(out.train), in_industry);
  std::copy_if(split.validation.begin(), split.validation.end(), std::back_inserter(out.validation), in_industry);
  for (const auto& ex : split.test) {
    if (!in_industry(ex)) continue;
    const auto profile = clients.find(ex.client_id);
    if (profile && profile->industry == industry.name) out.test.push_back(ex);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

void SynthesisConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, what); };
  if (num_intents == 0 || num_industries == 0 || intents_per_industry == 0 || clients_per_industry == 0 ||
      tickets_per_client == 0 || keywords_per_intent == 0 || noise_vocabulary == 0 || min_tokens_per_ticket == 0) {
    fail("synthesis counts must be positive");
  }
  if (industry_overlap_fraction < 0.0 || industry_overlap_fraction > 1.0) fail("overlap fraction must be in [0,1]");
  if (confusable_pair_fraction < 0.0 || confusable_pair_fraction > 1.0) fail("confusable fraction must be in [0,1]");
  if (min_client_share <= 0.0 || min_client_share > 1.0) fail("min client share must be in (0,1]");
  if (keyword_rate <= 0.0 || keyword_rate > 1.0) fail("keyword rate must be in (0,1]");
  if (zipf_exponent < 0.0) fail("zipf exponent must be non-negative");
  if (max_tokens_per_ticket < min_tokens_per_ticket) fail("token range is empty");
  if (twin_distinct_keywords >= keywords_per_intent) fail("twins must share at least one keyword");
  if (intents_per_industry > num_intents) fail("intents_per_industry exceeds num_intents");
  const auto shared = static_cast<std::size_t>(std::llround(industry_overlap_fraction * static_cast<double>(intents_per_industry)));
  const std::size_t exclusive = intents_per_industry - shared;
  if (shared + num_industries * exclusive > num_intents) fail("industries need more intents than the catalog holds");
  const auto pairs = static_cast<std::size_t>(confusable_pair_fraction * static_cast<double>(num_intents) / 2.0);
  if (pairs > 0 && num_industries < 2) fail("confusable pairs need at least two industries");
  if (pairs > (num_industries * exclusive) / 2) fail("not enough industry-exclusive intents for the confusable pairs");
}

SyntheticCorpus generate_corpus(const SynthesisConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t C = config.num_intents;
  const std::size_t m = config.num_industries;

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < C; ++i) labels.push_back(padded("intent_", i, 3));
  SyntheticCorpus corpus;
  corpus.catalog = IntentCatalog(labels);

  // Industry membership: a shared block plus exclusive blocks; leftover
  // intents are dealt round-robin as extra exclusives.
  std::vector<IntentId> order(C);
  std::iota(order.begin(), order.end(), IntentId{0});
  rng.shuffle(std::span(order));
  const auto shared = static_cast<std::size_t>(
      std::llround(config.industry_overlap_fraction * static_cast<double>(config.intents_per_industry)));
  const std::size_t exclusive = config.intents_per_industry - shared;
  std::vector<RelevantIntentsMask> industry_masks(m, RelevantIntentsMask(C));
  std::vector<std::vector<IntentId>> exclusives(m);
  std::size_t cursor = 0;
  for (; cursor < shared; ++cursor) {
    for (auto& mask : industry_masks) mask.set(order[cursor]);
  }
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t e = 0; e < exclusive; ++e, ++cursor) {
      industry_masks[k].set(order[cursor]);
      exclusives[k].push_back(order[cursor]);
    }
  }
  for (std::size_t k = 0; cursor < C; ++cursor, k = (k + 1) % m) {
    industry_masks[k].set(order[cursor]);
    exclusives[k].push_back(order[cursor]);
  }
  for (std::size_t k = 0; k < m; ++k) corpus.industries.push_back({industry_name(k), industry_masks[k]});

  // Confusable pairs link exclusive intents of neighbouring industries.
  const auto num_pairs = static_cast<std::size_t>(config.confusable_pair_fraction * static_cast<double>(C) / 2.0);
  std::vector<std::size_t> next_free(m, 0);
  std::vector<int> twin_of(C, -1);
  for (std::size_t p = 0; p < num_pairs; ++p) {
    const std::size_t a = p % m;
    const std::size_t b = (p + 1) % m;
    if (next_free[a] >= exclusives[a].size() || next_free[b] >= exclusives[b].size()) {
      throw Error(ErrorCode::invalid_argument, "not enough exclusive intents to build confusable pairs");
    }
    const IntentId first = exclusives[a][next_free[a]++];
    const IntentId second = exclusives[b][next_free[b]++];
    corpus.confusable_pairs.push_back({first, second});
    twin_of[second] = static_cast<int>(first);
  }

  std::unordered_set<std::string> used;
  corpus.keywords.resize(C);
  for (std::size_t i = 0; i < C; ++i) {
    if (twin_of[i] < 0) corpus.keywords[i] = make_vocabulary(rng, config.keywords_per_intent, used);
  }
  for (std::size_t i = 0; i < C; ++i) {
    if (twin_of[i] < 0) continue;
    auto words = corpus.keywords[static_cast<std::size_t>(twin_of[i])];
    auto fresh = make_vocabulary(rng, config.twin_distinct_keywords, used);
    std::copy(fresh.begin(), fresh.end(), words.end() - static_cast<std::ptrdiff_t>(fresh.size()));
    corpus.keywords[i] = std::move(words);
  }
  const auto noise_words = make_vocabulary(rng, config.noise_vocabulary, used);

  corpus.clients = ClientRegistry(C, corpus.industries);
  std::size_t ticket_counter = 0;
  std::size_t client_counter = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const auto pool = industry_masks[k].members();
    for (std::size_t c = 0; c < config.clients_per_industry; ++c, ++client_counter) {
      const auto client_id = padded("client_", client_counter, 4);
      corpus.clients.register_client(client_id, corpus.industries[k].name);

      auto candidates = pool;
      rng.shuffle(std::span(candidates));
      const double share = rng.uniform(config.min_client_share, 1.0);
      const auto keep = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(share * static_cast<double>(pool.size()))), 1, pool.size());
      candidates.resize(keep);
      corpus.client_intents.push_back(RelevantIntentsMask::from_members(C, candidates));

      // Zipf weights over the client's own popularity order.
      std::vector<double> cumulative(keep);
      double acc = 0.0;
      for (std::size_t r = 0; r < keep; ++r) {
        acc += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf_exponent);
        cumulative[r] = acc;
      }

      for (std::size_t t = 0; t < config.tickets_per_client; ++t, ++ticket_counter) {
        const double u = rng.uniform() * acc;
        const auto rank = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const IntentId gold = candidates[std::min(rank, keep - 1)];
        const auto& words = corpus.keywords[gold];

        const std::size_t span = config.max_tokens_per_ticket - config.min_tokens_per_ticket + 1;
        const std::size_t length = config.min_tokens_per_ticket + rng.below(span);
        const std::size_t subject_length = std::min<std::size_t>(length - 1, 2 + rng.below(3));
        LabeledExample ex;
        ex.ticket_id = padded("ticket_", ticket_counter, 6);
        ex.client_id = client_id;
        ex.gold = gold;
        for (std::size_t w = 0; w < length; ++w) {
          const auto& token = rng.bernoulli(config.keyword_rate) ? words[rng.below(words.size())]
                                                                 : noise_words[rng.below(noise_words.size())];
          auto& field = w < subject_length ? ex.subject : ex.description;
          if (!field.empty()) field += ' ';
          field += token;
        }
        corpus.examples.push_back(std::move(ex));
      }
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Files

void save_examples(std::span<const LabeledExample> examples, const IntentCatalog& catalog,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  for (const auto& ex : examples) {
    nlohmann::ordered_json record;
    record["ticket_id"] = ex.ticket_id;
    record["client_id"] = ex.client_id;
    record["subject"] = ex.subject;
    record["description"] = ex.description;
    record["gold_intent"] = catalog.label(ex.gold);
    out << record.dump() << '\n';
  }
}

std::vector<LabeledExample> load_examples(const std::filesystem::path& path, const IntentCatalog& catalog) {
  auto in = open_in(path);
  std::vector<LabeledExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    try {
      const auto record = nlohmann::json::parse(line);
      LabeledExample ex;
      ex.ticket_id = record.at("ticket_id").get<std::string>();
      ex.client_id = record.at("client_id").get<std::string>();
      ex.subject = record.value("subject", "");
      ex.description = record.value("description", "");
      ex.gold = catalog.id(record.at("gold_intent").get<std::string>());
      if (ex.subject.empty() && ex.description.empty()) {
        throw Error(ErrorCode::parse_error, "ticket has neither subject nor description");
      }
      examples.push_back(std::move(ex));
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse_error, where + ": " + e.what());
    }
  }
  return examples;
}

void save_corpus_dir(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_catalog(corpus.catalog, dir / "catalog.txt");
  save_industries(corpus.industries, dir / "industries.tsv");
  save_registry(corpus.clients, dir / "clients.tsv");
  save_examples(corpus.examples, corpus.catalog, dir / "tickets.jsonl");
}

CorpusFiles load_corpus_dir(const std::filesystem::path& dir) {
  CorpusFiles files;
  files.catalog = load_catalog(dir / "catalog.txt");
  files.industries = load_industries(dir / "industries.tsv", files.catalog.size());
  files.clients = load_registry(dir / "clients.tsv", files.catalog.size(), files.industries);
  files.examples = load_examples(dir / "tickets.jsonl", files.catalog);
  return files;
}

void save_split_dir(const DatasetSplit& split, const IntentCatalog& catalog, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_examples(split.train, catalog, dir / "train.jsonl");
  save_examples(split.validation, catalog, dir / "validation.jsonl");
  save_examples(split.test, catalog, dir / "test.jsonl");
}

DatasetSplit load_split_dir(const std::filesystem::path& dir, const IntentCatalog& catalog) {
  DatasetSplit split;
  split.train = load_examples(dir / "train.jsonl", catalog);
  split.validation = load_examples(dir / "validation.jsonl", catalog);
  if (std::filesystem::exists(dir / "test.jsonl")) split.test = load_examples(dir / "test.jsonl", catalog);
  return split;
}

}  // namespace intentscale
