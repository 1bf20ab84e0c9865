#include <numeric>

#include <gtest/gtest.h>

#include "intentscale/corpus.hpp"
#include "intentscale/error.hpp"
#include "intentscale/lists.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace intentscale;
using intentscale::testutil::histogram_of;

namespace {

const std::vector<int> kPercents{100, 99, 98, 97, 96, 95, 90, 80, 75, 60, 50, 33, 10, 1};

std::vector<IntentId> ids(std::initializer_list<IntentId> list) { return list; }

}  // namespace

TEST(BuildList, WorkedExamples) {
  // A:50 B:30 C:15 D:5
  const auto h = histogram_of({50, 30, 15, 5});
  EXPECT_EQ(build_list(h, 0.95).members(), ids({0, 1, 2}));
  EXPECT_EQ(build_list(h, 0.96).members(), ids({0, 1, 2, 3}));
  EXPECT_EQ(build_list(h, 1.0).members(), ids({0, 1, 2, 3}));
  EXPECT_EQ(build_list(h, 0.5).members(), ids({0}));
  EXPECT_EQ(build_list(h, 0.51).members(), ids({0, 1}));
  EXPECT_DOUBLE_EQ(achieved_coverage(h, build_list(h, 0.95)), 0.95);
}

TEST(BuildList, FullCoverageKeepsExactlyTheSeenIntents) {
  const auto h = histogram_of({0, 3, 0, 1, 7, 0});
  EXPECT_EQ(build_list(h, 1.0).members(), ids({1, 3, 4}));
}

TEST(BuildList, Errors) {
  EXPECT_THROW(build_list(IntentHistogram(4), 0.9), Error);
  const auto h = histogram_of({1, 2});
  EXPECT_THROW(build_list(h, 0.0), Error);
  EXPECT_THROW(build_list(h, 1.01), Error);
  EXPECT_THROW(list_stats({}), Error);
}

TEST(BuildList, MatchesRemovalSequenceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto counts = intentscale::testutil::random_counts(rng);
    const auto h = histogram_of(counts);
    for (int percent : kPercents) {
      const auto got = build_list(h, percent / 100.0).members();
      const auto outcomes = intentscale::testutil::removal_outcomes(counts, percent);
      EXPECT_TRUE(outcomes.count(got)) << "trial " << trial << " c=" << percent;
      EXPECT_EQ(got, intentscale::testutil::tie_rule_removal(counts, percent)) << "trial " << trial << " c=" << percent;
      EXPECT_EQ(got.size(), intentscale::testutil::min_cover_size(counts, percent));
    }
  }
}

TEST(BuildList, MonotoneInCoverage) {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto h = histogram_of(intentscale::testutil::random_counts(rng, 30));
    for (std::size_t i = 1; i < kPercents.size(); ++i) {
      const auto bigger = build_list(h, kPercents[i - 1] / 100.0);
      const auto smaller = build_list(h, kPercents[i] / 100.0);
      EXPECT_TRUE(smaller.is_subset_of(bigger));
    }
  }
}

TEST(BuildList, MinimalUnderFrequencyOrder) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto counts = intentscale::testutil::random_counts(rng, 30);
    const auto h = histogram_of(counts);
    for (int percent : kPercents) {
      const double c = percent / 100.0;
      auto list = build_list(h, c);
      EXPECT_GE(achieved_coverage(h, list), c);
      IntentId least = list.members().front();
      for (auto id : list.members()) {
        if (counts[id] < counts[least] || (counts[id] == counts[least] && id > least)) least = id;
      }
      list.set(least, false);
      std::uint64_t covered = 0;
      for (auto id : list.members()) covered += counts[id];
      EXPECT_FALSE(intentscale::testutil::covers(covered, h.total(), percent));
    }
  }
}

TEST(BuildList, InsertionOrderDoesNotMatter) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto counts = intentscale::testutil::random_counts(rng, 12);
    std::vector<IntentId> tickets;
    for (std::size_t i = 0; i < counts.size(); ++i) tickets.insert(tickets.end(), counts[i], static_cast<IntentId>(i));
    rng.shuffle(std::span(tickets));
    IntentHistogram shuffled(counts.size());
    for (auto id : tickets) shuffled.add(id);
    for (int percent : kPercents) {
      EXPECT_EQ(build_list(shuffled, percent / 100.0), build_list(histogram_of(counts), percent / 100.0));
    }
  }
}

TEST(BuildAll, MatchesPerClientOracleAndDefaultsMissingClients) {
  Rng rng(5);
  ClientHistories histories;
  std::map<std::string, std::vector<std::uint64_t>> raw;
  std::vector<std::string> clients;
  for (int c = 0; c < 50; ++c) {
    auto counts = intentscale::testutil::random_counts(rng, 10);
    counts.resize(10, 0);
    const std::string name = "client_" + std::to_string(c);
    raw[name] = counts;
    histories.emplace(name, histogram_of(counts));
    clients.push_back(name);
  }
  clients.push_back("newcomer");
  const auto masks = build_all(histories, clients, 10, 0.9);
  ASSERT_EQ(masks.size(), 51u);
  for (const auto& [name, counts] : raw) {
    EXPECT_EQ(masks.at(name).members(), intentscale::testutil::tie_rule_removal(counts, 90));
  }
  EXPECT_EQ(masks.at("newcomer"), RelevantIntentsMask::all(10));
}

TEST(Histories, CountGoldLabelsPerClient) {
  std::vector<LabeledExample> examples{{"t1", "a", "", "x", 2}, {"t2", "a", "", "y", 2}, {"t3", "b", "", "z", 0}};
  const auto h = histories_from_examples(examples, 3);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h.at("a").count(2), 2u);
  EXPECT_EQ(h.at("a").total(), 2u);
  EXPECT_EQ(h.at("b").count(0), 1u);
}

TEST(ListStats, MedianAndMax) {
  const auto mask_of = [](std::size_t k) {
    RelevantIntentsMask m(10);
    for (std::size_t i = 0; i < k; ++i) m.set(static_cast<IntentId>(i));
    return m;
  };
  const std::vector<RelevantIntentsMask> odd{mask_of(9), mask_of(3), mask_of(5)};
  const auto s = list_stats(odd);
  EXPECT_EQ(s.median, 5u);
  EXPECT_EQ(s.max, 9u);
  const std::vector<RelevantIntentsMask> even{mask_of(4), mask_of(2)};
  const auto t = list_stats(even);
  EXPECT_EQ(t.median, 2u);
  EXPECT_EQ(t.max, 4u);
}

TEST(ListStats, SyntheticCorpusSizesShrinkWithCoverage) {
  const auto corpus = generate_corpus(intentscale::testutil::small_corpus_config());
  const auto histories = histories_from_examples(corpus.examples, corpus.catalog.size());
  std::vector<std::string> clients;
  for (const auto& [name, h] : histories) clients.push_back(name);
  ListStats previous{SIZE_MAX, SIZE_MAX};
  for (double c : {1.0, 0.99, 0.98, 0.97, 0.96}) {
    const auto masks = build_all(histories, clients, corpus.catalog.size(), c);
    std::vector<RelevantIntentsMask> list;
    for (const auto& [name, m] : masks) list.push_back(m);
    const auto stats = list_stats(list);
    // Recompute independently from the sizes.
    std::vector<std::size_t> sizes;
    for (const auto& m : list) sizes.push_back(m.count());
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(stats.median, sizes[(sizes.size() - 1) / 2]);
    EXPECT_EQ(stats.max, sizes.back());
    EXPECT_LE(stats.median, previous.median);
    EXPECT_LE(stats.max, previous.max);
    previous = stats;
  }
}

TEST(RegistryWithMasks, ReplacesOnlyListedClients) {
  ClientRegistry base(4, {});
  base.register_client("a");
  base.register_client("b");
  std::map<std::string, RelevantIntentsMask, std::less<>> masks;
  masks.emplace("a", RelevantIntentsMask::from_members(4, ids({1})));
  const auto reg = registry_with_masks(base, masks);
  EXPECT_EQ(reg.get("a")->relevant.members(), ids({1}));
  EXPECT_EQ(reg.get("b")->relevant, RelevantIntentsMask::all(4));
  EXPECT_EQ(base.get("a")->relevant, RelevantIntentsMask::all(4));
}
