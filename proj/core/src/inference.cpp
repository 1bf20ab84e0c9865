#include "intentscale/inference.hpp"

#include <algorithm>
#include <numeric>

#include "intentscale/error.hpp"
#include "intentscale/trainer.hpp"

namespace intentscale {

std::string to_string(FilterMode mode) {
  switch (mode) {
    case FilterMode::none: return "none";
    case FilterMode::strict: return "strict";
    case FilterMode::search: return "search";
  }
  return "none";
}

FilterMode parse_filter_mode(std::string_view name) {
  if (name == "none") return FilterMode::none;
  if (name == "strict") return FilterMode::strict;
  if (name == "search") return FilterMode::search;
  throw Error(ErrorCode::invalid_argument, "unknown filter mode: " + std::string(name));
}

std::vector<IntentId> rank_intents(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  std::vector<IntentId> ranked(static_cast<std::size_t>(logits.size()));
  std::iota(ranked.begin(), ranked.end(), IntentId{0});
  std::stable_sort(ranked.begin(), ranked.end(), [&](IntentId a, IntentId b) { return logits(a) > logits(b); });
  return ranked;
}

PredictionResult resolve(const Eigen::Ref<const Eigen::VectorXd>& logits, const RelevantIntentsMask& mask,
                         FilterMode mode) {
  if (static_cast<std::size_t>(logits.size()) != mask.size()) {
    throw Error(ErrorCode::shape_mismatch, "mask length does not match the number of logits");
  }
  if (logits.size() == 0) throw Error(ErrorCode::invalid_argument, "no logits to rank");
  PredictionResult result;
  result.ranked = rank_intents(logits);
  result.top1 = result.ranked.front();
  result.scores = softmax(logits);
  switch (mode) {
    case FilterMode::none:
      result.chosen = result.top1;
      break;
    case FilterMode::strict:
      result.filtered = !mask.test(result.top1);
      if (!result.filtered) result.chosen = result.top1;
      break;
    case FilterMode::search:
      result.filtered = !mask.test(result.top1);
      for (IntentId id : result.ranked) {
        if (mask.test(id)) {
          result.chosen = id;
          break;
        }
      }
      break;
  }
  return result;
}

IntentId masked_argmax_oracle(const Eigen::Ref<const Eigen::VectorXd>& logits, const RelevantIntentsMask& mask) {
  if (static_cast<std::size_t>(logits.size()) != mask.size()) {
    throw Error(ErrorCode::shape_mismatch, "mask length does not match the number of logits");
  }
  std::optional<IntentId> best;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const auto id = static_cast<IntentId>(i);
    if (!mask.test(id)) continue;
    if (!best || logits(i) > logits(*best)) best = id;
  }
  if (!best) throw Error(ErrorCode::invalid_argument, "masked argmax over an empty mask");
  return *best;
}

PredictionResult predict(const ModelBundle& model, std::string_view text, const RelevantIntentsMask& mask,
                         FilterMode mode) {
  if (mask.size() != model.num_classes()) {
    throw Error(ErrorCode::shape_mismatch, "mask length does not match the model's catalog");
  }
  return resolve(model.logits(text, mask), mask, mode);
}

std::vector<PredictionResult> predict_batch(const ModelBundle& model, std::span<const std::string> texts,
                                            std::span<const RelevantIntentsMask> feature_masks,
                                            std::span<const RelevantIntentsMask> filter_masks, FilterMode mode) {
  if (texts.size() != feature_masks.size() || texts.size() != filter_masks.size()) {
    throw Error(ErrorCode::shape_mismatch, "texts and masks must align");
  }
  std::vector<PredictionResult> results;
  results.reserve(texts.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < texts.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, texts.size() - start);
    const auto logits = model.logits(texts.subspan(start, n), feature_masks.subspan(start, n));
    for (std::size_t b = 0; b < n; ++b) {
      results.push_back(resolve(logits.col(static_cast<Eigen::Index>(b)), filter_masks[start + b], mode));
    }
  }
  return results;
}

}  // namespace intentscale
