#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "intentscale/catalog.hpp"
#include "intentscale/model.hpp"

namespace intentscale {

/// none: raw top-1. strict: abstain when top-1 is outside the list.
/// search: first ranked intent inside the list.
enum class FilterMode { none, strict, search };

std::string to_string(FilterMode mode);
FilterMode parse_filter_mode(std::string_view name);

struct PredictionResult {
  std::vector<IntentId> ranked;  // logit descending, ties by smaller id
  IntentId top1 = 0;
  std::optional<IntentId> chosen;
  /// True iff top1 is outside the mask under strict/search.
  bool filtered = false;
  Eigen::VectorXd scores;  // softmax probabilities, indexed by intent id
};

std::vector<IntentId> rank_intents(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Applies a filter mode to precomputed logits.
PredictionResult resolve(const Eigen::Ref<const Eigen::VectorXd>& logits, const RelevantIntentsMask& mask,
                         FilterMode mode);

/// Reference for search mode: argmax over mask members, ties by smaller id.
IntentId masked_argmax_oracle(const Eigen::Ref<const Eigen::VectorXd>& logits, const RelevantIntentsMask& mask);

/// Eval-mode prediction. The mask is both the model feature and the filter.
PredictionResult predict(const ModelBundle& model, std::string_view text, const RelevantIntentsMask& mask,
                         FilterMode mode);

/// Batched predict; feature masks and filter masks may differ (e.g. an
/// industry filter over client-feature masks).
std::vector<PredictionResult> predict_batch(const ModelBundle& model, std::span<const std::string> texts,
                                            std::span<const RelevantIntentsMask> feature_masks,
                                            std::span<const RelevantIntentsMask> filter_masks, FilterMode mode);

}  // namespace intentscale
