#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "intentscale/error.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/optimizer.hpp"
#include "intentscale/trainer.hpp"
#include "test_util.hpp"

using namespace intentscale;

namespace {

ModelConfig tiny_model_config(std::uint64_t seed = 0) {
  ModelConfig config;
  config.encoder.buckets = 512;
  config.encoder.dim = 12;
  config.head.intents_embed_dim = 4;
  config.head.projection_dim = 16;
  config.train.seed = seed;
  config.train.batch_size = 32;
  config.train.learning_rate = 1e-2;
  config.train.max_epochs = 40;
  return config;
}

struct Toy {
  IntentCatalog catalog{{"refund", "login", "shipping", "invoice"}};
  ClientRegistry clients{4, {}};
  DatasetSplit split;
};

// Four intents, each marked by its own keyword in a sea of shared filler.
Toy toy_corpus(std::uint64_t seed = 1) {
  Toy toy;
  toy.clients.register_client("c1");
  Rng rng(seed);
  const std::vector<std::string> filler{"please", "help", "my", "account", "the", "thanks", "today", "issue"};
  std::vector<LabeledExample> all;
  for (int i = 0; i < 320; ++i) {
    LabeledExample ex;
    ex.ticket_id = "t" + std::to_string(i);
    ex.client_id = "c1";
    ex.gold = static_cast<IntentId>(i % 4);
    ex.subject = filler[rng.below(filler.size())];
    std::string d;
    for (int w = 0; w < 5; ++w) d += filler[rng.below(filler.size())] + " ";
    ex.description = d + "kw" + std::to_string(ex.gold);
    all.push_back(ex);
  }
  toy.split = standard_split(all, 0.2, 0.2, seed);
  return toy;
}

double mean_hamming(std::size_t C, double k, std::size_t draws, Rng& rng) {
  const RelevantIntentsMask base = RelevantIntentsMask::all(C);
  double total = 0.0;
  for (std::size_t d = 0; d < draws; ++d) {
    const auto noisy = inject_noise(base, k, rng);
    total += static_cast<double>(C - noisy.count());
  }
  return total / static_cast<double>(draws);
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  for (int C : {2, 10, 60, 500}) {
    const Eigen::VectorXd logits = Eigen::VectorXd::Constant(C, 3.7);
    EXPECT_NEAR(cross_entropy(logits, 1).loss, std::log(static_cast<double>(C)), 1e-9);
  }
}

TEST(CrossEntropy, ExtremeLogitsStayFinite) {
  Eigen::VectorXd logits(3);
  logits << 1e4, -1e4, 0.0;
  const auto right = cross_entropy(logits, 0);
  EXPECT_TRUE(std::isfinite(right.loss));
  EXPECT_NEAR(right.loss, 0.0, 1e-12);
  const auto wrong = cross_entropy(logits, 1);
  EXPECT_TRUE(std::isfinite(wrong.loss));
  EXPECT_NEAR(wrong.loss, 2e4, 1e-6);
  EXPECT_TRUE(wrong.grad.allFinite());
  EXPECT_NEAR(softmax(logits).sum(), 1.0, 1e-12);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const int C = 2 + static_cast<int>(rng.below(20));
    Eigen::VectorXd logits(C);
    for (int i = 0; i < C; ++i) logits(i) = rng.uniform(-5, 5);
    const auto gold = static_cast<IntentId>(rng.below(static_cast<std::size_t>(C)));
    const auto ce = cross_entropy(logits, gold);
    for (int i = 0; i < C; ++i) {
      Eigen::VectorXd up = logits, down = logits;
      const double h = 1e-5;
      up(i) += h;
      down(i) -= h;
      const double numeric = (cross_entropy(up, gold).loss - cross_entropy(down, gold).loss) / (2 * h);
      EXPECT_NEAR(ce.grad(i), numeric, 1e-6);
    }
  }
  EXPECT_THROW(cross_entropy(Eigen::VectorXd::Zero(3), 3), Error);
}

TEST(NoiseInjector, HammingDistanceWithinBinomialInterval) {
  const std::size_t C = 500, draws = 10000;
  const double k = 0.05;
  Rng rng(3);
  const double mean = mean_hamming(C, k, draws, rng);
  // Mean of draws i.i.d. Binomial(C, k): sd = sqrt(C k (1-k) / draws).
  const double half_width = 2.5758293035489 * std::sqrt(C * k * (1 - k) / draws);
  EXPECT_NEAR(mean, C * k, half_width);
}

TEST(NoiseInjector, IdentityAndComplement) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    RelevantIntentsMask m(37);
    for (std::size_t i = 0; i < 37; ++i) m.set(static_cast<IntentId>(i), rng.bernoulli(0.4));
    EXPECT_EQ(inject_noise(m, 0.0, rng), m);
    auto complement = m;
    for (std::size_t i = 0; i < 37; ++i) complement.flip(static_cast<IntentId>(i));
    EXPECT_EQ(inject_noise(m, 1.0, rng), complement);
  }
  EXPECT_THROW(inject_noise(RelevantIntentsMask(3), 1.5, rng), Error);
}

TEST(EarlyStopping, StopsAfterPatienceAndKeepsBest) {
  EarlyStopping stopping(3);
  const std::vector<double> trace{1.0, 0.9, 0.95, 0.93, 0.94};
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_FALSE(stopping.should_stop()) << "stopped before epoch " << i + 1;
    stopping.update(trace[i]);
  }
  EXPECT_TRUE(stopping.should_stop());
  EXPECT_EQ(stopping.best_epoch(), 2u);
  EXPECT_DOUBLE_EQ(stopping.best_value(), 0.9);
  EXPECT_EQ(stopping.epochs_seen(), 5u);
  EXPECT_THROW(EarlyStopping(0), Error);
}

TEST(EarlyStopping, TiesAreNotImprovements) {
  EarlyStopping stopping(1);
  EXPECT_TRUE(stopping.update(0.5));
  EXPECT_FALSE(stopping.update(0.5));
  EXPECT_TRUE(stopping.should_stop());
  EXPECT_EQ(stopping.best_epoch(), 1u);
}

TEST(AdamW, MatchesReferenceUpdate) {
  AdamWConfig c{0.01, 0.1, 0.9, 0.999, 1e-8};
  AdamW opt(c);
  std::vector<double> theta{0.5, -1.0, 2.0};
  std::vector<double> ref = theta;
  std::vector<double> m(3, 0.0), v(3, 0.0);
  Rng rng(5);
  for (int t = 1; t <= 5; ++t) {
    std::vector<double> g{rng.uniform(-1, 1), rng.uniform(-1, 1), t % 2 == 0 ? 0.0 : 0.3};
    opt.step({{"w", theta.data(), g.data(), 3}});
    for (int i = 0; i < 3; ++i) {
      ref[i] *= 1.0 - c.learning_rate * c.weight_decay;
      m[i] = c.beta1 * m[i] + (1 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(c.beta1, t));
      const double vhat = v[i] / (1 - std::pow(c.beta2, t));
      ref[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(theta[i], ref[i], 1e-7);
  }
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(AdamW, DecayIsDecoupledFromGradient) {
  // With a zero gradient the moments stay zero and only decay acts.
  AdamW opt({0.1, 0.5, 0.9, 0.999, 1e-8});
  std::vector<double> theta{4.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  opt.step({{"w", theta.data(), g.data(), 2}});
  EXPECT_DOUBLE_EQ(theta[0], 4.0 * 0.95);
  EXPECT_DOUBLE_EQ(theta[1], -2.0 * 0.95);

  // Scaling the gradient leaves the first Adam step unchanged.
  std::vector<double> a{1.0}, b{1.0};
  const std::vector<double> ga{0.2}, gb{200.0};
  AdamW oa({0.1, 0.5, 0.9, 0.999, 0.0}), ob({0.1, 0.5, 0.9, 0.999, 0.0});
  oa.step({{"w", a.data(), ga.data(), 1}});
  ob.step({{"w", b.data(), gb.data(), 1}});
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[0], 0.95 - 0.1, 1e-12);
}

TEST(TrainConfig, ValidationAndPreset) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(TrainConfig::paper_preset().learning_rate, 1e-6);
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Train, SeparableToyCorpus) {
  const auto toy = toy_corpus();
  for (bool intents : {true, false}) {
    auto config = tiny_model_config(7);
    config.head.use_intents_feature = intents;
    std::vector<EpochLog> seen;
    const auto model = train(toy.split, toy.clients, toy.catalog, config, {[&](const EpochLog& e) { seen.push_back(e); }});
    EXPECT_EQ(seen.size(), model.log.size());
    ASSERT_GE(model.best_epoch, 1u);
    // Best epoch holds the smallest validation loss seen.
    for (const auto& e : model.log) EXPECT_GE(e.validation_loss, model.log[model.best_epoch - 1].validation_loss);
    std::size_t correct = 0;
    for (const auto& ex : toy.split.test) {
      correct += predict(model, ex.text(), RelevantIntentsMask::all(4), FilterMode::none).top1 == ex.gold;
    }
    EXPECT_GE(static_cast<double>(correct) / static_cast<double>(toy.split.test.size()), 0.99);
    EXPECT_NEAR(evaluate_loss(model, toy.split.validation, toy.clients), model.log[model.best_epoch - 1].validation_loss,
                1e-12);
  }
}

TEST(Train, RejectsBadInputs) {
  auto toy = toy_corpus();
  auto config = tiny_model_config();
  DatasetSplit empty;
  EXPECT_THROW(train(empty, toy.clients, toy.catalog, config), Error);
  ClientRegistry wrong(5, {});
  EXPECT_THROW(train(toy.split, wrong, toy.catalog, config), Error);
  toy.split.train[0].client_id = "ghost";
  EXPECT_THROW(train(toy.split, toy.clients, toy.catalog, config), Error);
}

TEST(Checkpoint, DeterministicBytesAndRoundTrip) {
  const auto toy = toy_corpus(2);
  auto config = tiny_model_config(3);
  config.train.max_epochs = 3;
  config.train.noise_rate = 0.05;
  const auto a = train(toy.split, toy.clients, toy.catalog, config);
  const auto b = train(toy.split, toy.clients, toy.catalog, config);
  const auto bytes = serialize_checkpoint(a);
  EXPECT_EQ(bytes, serialize_checkpoint(b));

  config.train.seed = 4;
  EXPECT_NE(bytes, serialize_checkpoint(train(toy.split, toy.clients, toy.catalog, config)));

  intentscale::testutil::TempDir dir;
  save_checkpoint(a, dir / "model.bin");
  const auto loaded = load_checkpoint(dir / "model.bin");
  EXPECT_EQ(serialize_checkpoint(loaded), bytes);
  EXPECT_EQ(loaded.best_epoch, a.best_epoch);
  EXPECT_EQ(loaded.log.size(), a.log.size());
  EXPECT_EQ(loaded.catalog_fingerprint, toy.catalog.fingerprint());
  const auto mask = RelevantIntentsMask::all(4);
  for (const auto& ex : toy.split.test) EXPECT_EQ(loaded.logits(ex.text(), mask), a.logits(ex.text(), mask));

  EXPECT_NO_THROW(loaded.check_catalog(toy.catalog));
  try {
    loaded.check_catalog(IntentCatalog({"refund", "login", "shipping", "other"}));
    ADD_FAILURE() << "fingerprint mismatch not detected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::fingerprint_mismatch);
  }
}

TEST(Checkpoint, RejectsCorruptBytes) {
  const auto toy = toy_corpus();
  const auto model = init_model(toy.catalog, tiny_model_config());
  auto bytes = serialize_checkpoint(model);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), Error);
  bytes[0] ^= 0x5a;
  EXPECT_THROW(deserialize_checkpoint(bytes), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.bin"), Error);
}

TEST(Gradcheck, PassesWithFrozenDropoutAndCatchesSignFlip) {
  const auto toy = toy_corpus();
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto model = init_model(toy.catalog, tiny_model_config(seed));
    const auto& ex = toy.split.train[seed];
    GradcheckSample sample{ex.text(), RelevantIntentsMask(4), ex.gold, std::nullopt};
    for (std::size_t i = 0; i < 4; ++i) sample.mask.set(static_cast<IntentId>(i), rng.bernoulli(0.6));
    sample.dropout = model.head.sample_dropout(sample.mask, rng);
    GradcheckOptions options;
    options.seed = seed;
    const auto report = gradcheck(model, sample, options);
    EXPECT_LT(report.max_relative_error, 1e-4) << report.worst_tensor;
    EXPECT_GT(report.coordinates_checked, 0u);
    EXPECT_NEAR(report.loss, sample_loss(model, sample), 1e-12);

    options.corrupt = [](ModelGradients& g) {
      g.head.for_each([](const std::string&, double* data, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) data[i] = -data[i];
      });
      for (auto& [bucket, column] : g.encoder_columns) column = -column;
    };
    EXPECT_GT(gradcheck(model, sample, options).max_relative_error, 1e-4);
  }
}
