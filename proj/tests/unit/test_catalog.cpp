#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "intentscale/catalog.hpp"
#include "intentscale/error.hpp"
#include "intentscale/rng.hpp"
#include "test_util.hpp"

using namespace intentscale;

namespace {

IntentCatalog abc() { return IntentCatalog({"refund", "login", "shipping", "invoice", "cancel"}); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::io_error;
}

ClientRegistry finance_registry() {
  const std::vector<IntentId> finance_ids{0, 3};
  return ClientRegistry(5, {{"Finance", RelevantIntentsMask::from_members(5, finance_ids)}});
}

}  // namespace

TEST(IntentCatalog, DenseIdsAndLookup) {
  const auto catalog = abc();
  ASSERT_EQ(catalog.size(), 5u);
  for (IntentId i = 0; i < catalog.size(); ++i) EXPECT_EQ(catalog.id(catalog.label(i)), i);
  EXPECT_EQ(catalog.find("shipping"), IntentId{2});
  EXPECT_FALSE(catalog.find("nope").has_value());
  EXPECT_EQ(code_of([&] { catalog.id("nope"); }), ErrorCode::not_found);
  EXPECT_EQ(code_of([&] { catalog.label(5); }), ErrorCode::not_found);
}

TEST(IntentCatalog, RejectsDuplicateAndEmptyLabels) {
  EXPECT_EQ(code_of([] { IntentCatalog({"a", "b", "a"}); }), ErrorCode::already_exists);
  EXPECT_EQ(code_of([] { IntentCatalog({"a", ""}); }), ErrorCode::invalid_argument);
  EXPECT_EQ(code_of([] { IntentCatalog({"a\tb"}); }), ErrorCode::invalid_argument);
}

TEST(IntentCatalog, FingerprintDependsOnOrderAndContent) {
  EXPECT_EQ(abc().fingerprint(), abc().fingerprint());
  EXPECT_NE(IntentCatalog({"a", "b"}).fingerprint(), IntentCatalog({"b", "a"}).fingerprint());
  EXPECT_NE(IntentCatalog({"a", "b"}).fingerprint(), IntentCatalog({"a", "c"}).fingerprint());
}

TEST(RelevantIntentsMask, SetSemantics) {
  const std::vector<IntentId> ab{0, 3};
  const std::vector<IntentId> ba{3, 0, 3};
  EXPECT_EQ(RelevantIntentsMask::from_members(5, ab), RelevantIntentsMask::from_members(5, ba));
  auto m = RelevantIntentsMask::from_members(5, ab);
  EXPECT_EQ(m.count(), 2u);
  EXPECT_EQ(m.members(), (std::vector<IntentId>{0, 3}));
  EXPECT_TRUE(m.is_subset_of(RelevantIntentsMask::all(5)));
  EXPECT_FALSE(RelevantIntentsMask::all(5).is_subset_of(m));
  m.flip(0);
  EXPECT_EQ(m.members(), (std::vector<IntentId>{3}));
  EXPECT_TRUE(RelevantIntentsMask(5).empty());
  const std::vector<IntentId> bad{5};
  EXPECT_EQ(code_of([&] { RelevantIntentsMask::from_members(5, bad); }), ErrorCode::shape_mismatch);
}

TEST(RelevantIntentsMask, HexRoundTrip) {
  Rng rng(5);
  for (std::size_t n : {1u, 3u, 4u, 5u, 17u, 60u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      RelevantIntentsMask m(n);
      for (std::size_t i = 0; i < n; ++i) m.set(static_cast<IntentId>(i), rng.bernoulli(0.5));
      const auto hex = m.to_hex();
      EXPECT_EQ(hex.size(), (n + 3) / 4);
      EXPECT_EQ(RelevantIntentsMask::from_hex(n, hex), m);
    }
  }
  // Digit k holds bits 4k..4k+3, lowest first.
  const std::vector<IntentId> first{0};
  EXPECT_EQ(RelevantIntentsMask::from_members(5, first).to_hex(), "10");
  const std::vector<IntentId> fifth{4};
  EXPECT_EQ(RelevantIntentsMask::from_members(5, fifth).to_hex(), "01");
  EXPECT_EQ(code_of([] { RelevantIntentsMask::from_hex(5, "1"); }), ErrorCode::shape_mismatch);
  EXPECT_EQ(code_of([] { RelevantIntentsMask::from_hex(5, "0z"); }), ErrorCode::parse_error);
  EXPECT_EQ(code_of([] { RelevantIntentsMask::from_hex(5, "02"); }), ErrorCode::parse_error);
}

TEST(ClientRegistry, RegisterDefaultsToAllOnes) {
  auto reg = finance_registry();
  const auto p = reg.register_client("acme");
  EXPECT_EQ(p->relevant, RelevantIntentsMask::all(5));
  EXPECT_EQ(p->relevant.size(), 5u);
  EXPECT_FALSE(p->industry.has_value());
  EXPECT_EQ(p->version, 0u);
}

TEST(ClientRegistry, RegisterWithIndustryMask) {
  auto reg = finance_registry();
  const auto& finance = reg.industry("Finance").intents;
  const auto p = reg.register_client("acme", "Finance", finance);
  EXPECT_EQ(p->relevant, finance);
  EXPECT_EQ(p->industry, "Finance");
}

TEST(ClientRegistry, RegisterErrors) {
  auto reg = finance_registry();
  EXPECT_EQ(code_of([&] { reg.register_client("acme", "Retail"); }), ErrorCode::not_found);
  reg.register_client("acme");
  EXPECT_EQ(code_of([&] { reg.register_client("acme"); }), ErrorCode::already_exists);
  EXPECT_EQ(code_of([&] { reg.register_client("beta", std::nullopt, RelevantIntentsMask(4)); }),
            ErrorCode::shape_mismatch);
  EXPECT_FALSE(reg.contains("beta"));
}

TEST(ClientRegistry, UpdatesAreVersionedAndLastWriterWins) {
  auto reg = finance_registry();
  reg.register_client("acme");
  const std::vector<IntentId> m1{1};
  const std::vector<IntentId> m2{2, 4};
  reg.update_relevant_intents("acme", RelevantIntentsMask::from_members(5, m1));
  const auto p = reg.update_relevant_intents("acme", RelevantIntentsMask::from_members(5, m2));
  EXPECT_EQ(p->version, 2u);
  EXPECT_EQ(reg.get("acme")->relevant, RelevantIntentsMask::from_members(5, m2));
}

TEST(ClientRegistry, FailedUpdateKeepsOldMask) {
  auto reg = finance_registry();
  reg.register_client("acme");
  EXPECT_EQ(code_of([&] { reg.update_relevant_intents("acme", RelevantIntentsMask(6)); }),
            ErrorCode::shape_mismatch);
  EXPECT_EQ(reg.get("acme")->relevant, RelevantIntentsMask::all(5));
  EXPECT_EQ(reg.get("acme")->version, 0u);
  EXPECT_EQ(code_of([&] { reg.update_relevant_intents("ghost", RelevantIntentsMask(5)); }), ErrorCode::not_found);
}

TEST(ClientRegistry, OldSnapshotsStayValid) {
  auto reg = finance_registry();
  const auto before = reg.register_client("acme");
  reg.update_relevant_intents("acme", RelevantIntentsMask(5));
  EXPECT_EQ(before->relevant, RelevantIntentsMask::all(5));
  EXPECT_EQ(reg.get("acme")->relevant.count(), 0u);
}

TEST(ClientRegistry, AssignIndustry) {
  ClientRegistry reg(5, {{"Finance", RelevantIntentsMask::all(5)}, {"Retail", RelevantIntentsMask::all(5)}});
  reg.register_client("acme");
  EXPECT_EQ(reg.assign_industry("acme", "Finance")->industry, "Finance");
  EXPECT_EQ(reg.assign_industry("acme", "Retail")->industry, "Retail");
  EXPECT_EQ(code_of([&] { reg.assign_industry("acme", "Health"); }), ErrorCode::not_found);
  EXPECT_EQ(code_of([&] { reg.assign_industry("ghost", "Retail"); }), ErrorCode::not_found);
}

TEST(ClientRegistry, ConcurrentReadersSeeWholeMasks) {
  // Writers alternate between two masks of different sizes; a torn read
  // would show a member count that is neither.
  auto reg = ClientRegistry(64, {});
  const auto ones = RelevantIntentsMask::all(64);
  const auto none = RelevantIntentsMask(64);
  reg.register_client("acme", std::nullopt, ones);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> torn{0};
  std::atomic<std::size_t> reads{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 3; ++t) {
    readers.emplace_back([&] {
      std::uint64_t last_version = 0;
      while (!done) {
        const auto p = reg.get("acme");
        const auto n = p->relevant.count();
        if (n != 0 && n != 64) ++torn;
        if (p->version < last_version) ++torn;
        last_version = p->version;
        ++reads;
      }
    });
  }
  // Let every reader start before writing; yield so they interleave on a
  // single core too.
  while (reads < 3) std::this_thread::yield();
  for (int i = 0; i < 5000; ++i) {
    reg.update_relevant_intents("acme", i % 2 == 0 ? none : ones);
    if (i % 50 == 0) std::this_thread::yield();
  }
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(torn.load(), 0u);
  EXPECT_GT(reads.load(), 0u);
  EXPECT_EQ(reg.get("acme")->version, 5000u);
}

TEST(Persistence, RegistryRoundTripsExactly) {
  testutil::TempDir dir;
  auto reg = finance_registry();
  reg.register_client("zeta", "Finance", reg.industry("Finance").intents);
  reg.register_client("alpha");
  const std::vector<IntentId> m{1, 2};
  reg.update_relevant_intents("alpha", RelevantIntentsMask::from_members(5, m));
  save_registry(reg, dir / "clients.tsv");
  const std::string text = testutil::read_file(dir / "clients.tsv");
  EXPECT_EQ(text, "alpha\t-\t1\t60\nzeta\tFinance\t0\t90\n");
  const auto loaded = load_registry(dir / "clients.tsv", 5, reg.industries());
  ASSERT_EQ(loaded.size(), 2u);
  for (const auto& p : reg.profiles()) {
    const auto q = loaded.get(p.client_id);
    EXPECT_EQ(q->relevant, p.relevant);
    EXPECT_EQ(q->version, p.version);
    EXPECT_EQ(q->industry, p.industry);
  }
  save_registry(loaded, dir / "again.tsv");
  EXPECT_EQ(testutil::read_file(dir / "again.tsv"), text);
}

TEST(Persistence, CatalogAndIndustriesRoundTrip) {
  testutil::TempDir dir;
  save_catalog(abc(), dir / "catalog.txt");
  const auto catalog = load_catalog(dir / "catalog.txt");
  EXPECT_EQ(catalog.labels(), abc().labels());
  EXPECT_EQ(catalog.fingerprint(), abc().fingerprint());
  const auto reg = finance_registry();
  save_industries(reg.industries(), dir / "industries.tsv");
  const auto industries = load_industries(dir / "industries.tsv", 5);
  ASSERT_EQ(industries.size(), 1u);
  EXPECT_EQ(industries[0].name, "Finance");
  EXPECT_EQ(industries[0].intents, reg.industries()[0].intents);
}

TEST(Persistence, MalformedRegistryLine) {
  testutil::TempDir dir;
  {
    std::ofstream out(dir / "clients.tsv");
    out << "acme\t-\tnotanumber\t1f\n";
  }
  EXPECT_EQ(code_of([&] { load_registry(dir / "clients.tsv", 5, {}); }), ErrorCode::parse_error);
}
