#include <cmath>

#include <gtest/gtest.h>

#include "intentscale/error.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/trainer.hpp"
#include "oracles.hpp"

using namespace intentscale;

namespace {

Eigen::VectorXd random_logits(std::size_t C, Rng& rng) {
  Eigen::VectorXd logits(static_cast<Eigen::Index>(C));
  // Coarse values half the time so ties are common.
  const bool coarse = rng.bernoulli(0.5);
  for (auto& x : logits) x = coarse ? static_cast<double>(rng.below(4)) : rng.uniform(-6, 6);
  return logits;
}

RelevantIntentsMask random_mask(std::size_t C, Rng& rng) {
  RelevantIntentsMask m(C);
  const double p = rng.uniform();
  for (std::size_t i = 0; i < C; ++i) m.set(static_cast<IntentId>(i), rng.bernoulli(p));
  return m;
}

ModelBundle tiny_model(std::size_t C) {
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < C; ++i) labels.push_back("i" + std::to_string(i));
  ModelConfig config;
  config.encoder.buckets = 256;
  config.encoder.dim = 8;
  config.head.intents_embed_dim = 4;
  config.head.projection_dim = 8;
  return init_model(IntentCatalog(labels), config);
}

}  // namespace

TEST(Rank, DescendingWithSmallerIdOnTies) {
  Eigen::VectorXd logits(5);
  logits << 1.0, 3.0, 1.0, 3.0, -2.0;
  EXPECT_EQ(rank_intents(logits), (std::vector<IntentId>{1, 3, 0, 2, 4}));
}

TEST(Resolve, ModesOnHandExample) {
  Eigen::VectorXd logits(4);
  logits << 0.1, 2.0, 1.5, -1.0;
  const std::vector<IntentId> members{0, 2};
  const auto mask = RelevantIntentsMask::from_members(4, members);

  const auto none = resolve(logits, mask, FilterMode::none);
  EXPECT_EQ(none.top1, 1u);
  EXPECT_EQ(none.chosen, IntentId{1});
  EXPECT_FALSE(none.filtered);

  const auto strict = resolve(logits, mask, FilterMode::strict);
  EXPECT_TRUE(strict.filtered);
  EXPECT_FALSE(strict.chosen.has_value());

  const auto search = resolve(logits, mask, FilterMode::search);
  EXPECT_TRUE(search.filtered);
  EXPECT_EQ(search.chosen, IntentId{2});

  const auto inside = resolve(logits, RelevantIntentsMask::all(4), FilterMode::strict);
  EXPECT_FALSE(inside.filtered);
  EXPECT_EQ(inside.chosen, IntentId{1});
  EXPECT_NEAR(none.scores.sum(), 1.0, 1e-12);
}

TEST(Resolve, EmptyMask) {
  Eigen::VectorXd logits(3);
  logits << 1, 2, 3;
  const RelevantIntentsMask empty(3);
  EXPECT_FALSE(resolve(logits, empty, FilterMode::strict).chosen.has_value());
  EXPECT_FALSE(resolve(logits, empty, FilterMode::search).chosen.has_value());
  EXPECT_EQ(resolve(logits, empty, FilterMode::none).chosen, IntentId{2});
  EXPECT_THROW(masked_argmax_oracle(logits, empty), Error);
  EXPECT_THROW(resolve(logits, RelevantIntentsMask(4), FilterMode::none), Error);
}

TEST(Resolve, SearchEqualsMaskedArgmaxOnRandomPairs) {
  Rng rng(1);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const std::size_t C = 1 + rng.below(40);
    const auto logits = random_logits(C, rng);
    const auto mask = random_mask(C, rng);
    const auto result = resolve(logits, mask, FilterMode::search);
    const auto expected = intentscale::testutil::masked_argmax_scan(logits, mask);
    if (result.chosen != expected) ++mismatches;
    if (expected && *expected != masked_argmax_oracle(logits, mask)) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Resolve, Invariants) {
  Rng rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t C = 1 + rng.below(30);
    const auto logits = random_logits(C, rng);
    const auto mask = random_mask(C, rng);
    for (auto mode : {FilterMode::none, FilterMode::strict, FilterMode::search}) {
      const auto r = resolve(logits, mask, mode);
      auto sorted = r.ranked;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < C; ++i) ASSERT_EQ(sorted[i], i);
      EXPECT_NEAR(r.scores.sum(), 1.0, 1e-9);
      if (mode != FilterMode::none && r.chosen) EXPECT_TRUE(mask.test(*r.chosen));
      EXPECT_EQ(r.filtered, mode != FilterMode::none && !mask.test(r.top1));
    }
    // A strict answer, when present, is also the search answer.
    const auto strict = resolve(logits, mask, FilterMode::strict);
    if (strict.chosen) EXPECT_EQ(strict.chosen, resolve(logits, mask, FilterMode::search).chosen);
  }
}

TEST(Predict, MatchesResolveAndBatch) {
  const auto model = tiny_model(12);
  Rng rng(3);
  std::vector<std::string> texts;
  std::vector<RelevantIntentsMask> features, filters;
  for (int i = 0; i < 50; ++i) {
    texts.push_back("w" + std::to_string(rng.below(30)) + " w" + std::to_string(rng.below(30)));
    features.push_back(random_mask(12, rng));
    filters.push_back(random_mask(12, rng));
  }
  for (auto mode : {FilterMode::none, FilterMode::strict, FilterMode::search}) {
    const auto batch = predict_batch(model, texts, features, filters, mode);
    ASSERT_EQ(batch.size(), texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const auto single = resolve(model.logits(texts[i], features[i]), filters[i], mode);
      EXPECT_EQ(batch[i].chosen, single.chosen);
      EXPECT_EQ(batch[i].ranked, single.ranked);
      if (mode == FilterMode::search && filters[i].count() > 0) {
        EXPECT_EQ(batch[i].chosen, masked_argmax_oracle(model.logits(texts[i], features[i]), filters[i]));
      }
      const auto own = predict(model, texts[i], features[i], mode);
      EXPECT_EQ(own.chosen, resolve(model.logits(texts[i], features[i]), features[i], mode).chosen);
    }
  }
  EXPECT_THROW(predict(model, "x", RelevantIntentsMask(11), FilterMode::none), Error);
  EXPECT_THROW(predict_batch(model, texts, features, std::span(filters).first(3), FilterMode::none), Error);
}

TEST(FilterMode, ParseAndPrint) {
  for (auto mode : {FilterMode::none, FilterMode::strict, FilterMode::search}) {
    EXPECT_EQ(parse_filter_mode(to_string(mode)), mode);
  }
  EXPECT_THROW(parse_filter_mode("loose"), Error);
}
