#include <benchmark/benchmark.h>

#include "intentscale/head.hpp"
#include "intentscale/inference.hpp"
#include "intentscale/lists.hpp"
#include "intentscale/trainer.hpp"

using namespace intentscale;

namespace {

ClassificationHead default_head(bool intents) {
  HeadConfig c;
  c.num_classes = 60;
  c.use_intents_feature = intents;
  return ClassificationHead(c, ClassificationHead::init_params(c, 1));
}

RelevantIntentsMask half_mask(std::size_t n) {
  RelevantIntentsMask m(n);
  for (std::size_t i = 0; i < n; i += 2) m.set(static_cast<IntentId>(i));
  return m;
}

}  // namespace

static void BM_EncoderEncode(benchmark::State& state) {
  HashedBagEncoder enc(EncoderConfig{});
  enc.init(1);
  const std::string text = "my refund for order 4211 has not arrived yet, please check the shipping status";
  for (auto _ : state) benchmark::DoNotOptimize(enc.encode(text));
}
BENCHMARK(BM_EncoderEncode);

static void BM_HeadForwardBatch(benchmark::State& state) {
  const auto head = default_head(state.range(1) != 0);
  const auto B = state.range(0);
  Rng rng(2);
  Eigen::MatrixXd text = Eigen::MatrixXd::Random(64, B);
  std::vector<RelevantIntentsMask> masks(static_cast<std::size_t>(B), half_mask(60));
  for (auto _ : state) benchmark::DoNotOptimize(head.forward(text, masks).logits.data());
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_HeadForwardBatch)->Args({1, 1})->Args({512, 1})->Args({512, 0});

static void BM_HeadTrainStep(benchmark::State& state) {
  const auto head = default_head(true);
  const auto B = state.range(0);
  Rng rng(3);
  Eigen::MatrixXd text = Eigen::MatrixXd::Random(64, B);
  std::vector<RelevantIntentsMask> masks(static_cast<std::size_t>(B), half_mask(60));
  std::vector<DropoutSample> dropout;
  for (const auto& m : masks) dropout.push_back(head.sample_dropout(m, rng));
  const Eigen::MatrixXd dlogits = Eigen::MatrixXd::Random(60, B);
  for (auto _ : state) {
    const auto cache = head.forward(text, masks, dropout);
    benchmark::DoNotOptimize(head.backward(cache, dlogits).params.projection.data());
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_HeadTrainStep)->Arg(512);

static void BM_BuildList(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  IntentHistogram h(n);
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) h.add(static_cast<IntentId>(i), rng.below(1000));
  h.add(0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_list(h, 0.98));
}
BENCHMARK(BM_BuildList)->Arg(60)->Arg(500);

static void BM_ResolveSearch(benchmark::State& state) {
  Eigen::VectorXd logits = Eigen::VectorXd::Random(60);
  const auto mask = half_mask(60);
  for (auto _ : state) benchmark::DoNotOptimize(resolve(logits, mask, FilterMode::search).chosen);
}
BENCHMARK(BM_ResolveSearch);
BENCHMARK_MAIN();
