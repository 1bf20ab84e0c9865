#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intentscale/catalog.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

enum class Aggregator { concat, sum, mean };

std::string to_string(Aggregator aggregator);
Aggregator parse_aggregator(std::string_view name);

enum class Mode { train, eval };

struct HeadConfig {
  std::size_t text_dim = 64;
  std::size_t intents_embed_dim = 16;
  Aggregator aggregator = Aggregator::concat;
  std::size_t projection_dim = 128;
  std::size_t num_residual_layers = 1;
  /// Per-intent row dropout over the relevant set.
  double intents_dropout = 0.90;
  double residual_dropout = 0.10;
  std::size_t num_classes = 0;
  bool use_intents_feature = true;

  void validate() const;
  /// Width of the aggregated text/intents vector fed to the projection.
  std::size_t aggregated_dim() const;
};

struct ResidualLayer {
  Eigen::MatrixXd weight;  // P x P
  Eigen::VectorXd bias;    // P
};

/// Trainable head tensors. Column i of intent_embedding is the embedding of
/// intent i. When the intents feature is off it is empty.
struct HeadParams {
  Eigen::MatrixXd intent_embedding;  // K x C
  Eigen::MatrixXd projection;        // P x aggregated_dim
  Eigen::VectorXd projection_bias;   // P
  std::vector<ResidualLayer> residual;
  Eigen::MatrixXd classifier;        // C x P
  Eigen::VectorXd classifier_bias;   // C

  /// Bumped after every in-place update; caches remember the value they
  /// were built against.
  std::uint64_t version = 0;

  static HeadParams zeros_like(const HeadParams& other);

  /// Visits every tensor as (name, data pointer, element count) in a fixed
  /// order.
  void for_each(const std::function<void(const std::string&, double*, std::size_t)>& fn);
  void for_each(const std::function<void(const std::string&, const double*, std::size_t)>& fn) const;
  std::size_t parameter_count() const;
};

/// Frozen stochastic choices of one train-mode forward pass.
struct DropoutSample {
  /// Per catalog intent: 1 if the row survives (only relevant intents
  /// matter).
  std::vector<std::uint8_t> intent_keep;
  /// Per residual layer: per-unit scale, 0 or 1/(1-p).
  std::vector<Eigen::VectorXd> residual_scale;
};

/// Intermediates of a batch forward pass; columns are examples.
struct HeadCache {
  const HeadParams* params = nullptr;
  std::uint64_t params_version = 0;
  bool train = false;
  Eigen::MatrixXd intent_weights;  // C x B, row-weights pooled into v
  Eigen::MatrixXd text;            // D x B
  Eigen::MatrixXd aggregated;      // Z x B
  std::vector<Eigen::MatrixXd> layer_inputs;  // L+1 entries, P x B
  std::vector<Eigen::MatrixXd> activations;   // tanh outputs, L entries
  std::vector<Eigen::MatrixXd> dropout_scale; // L entries when train
  Eigen::MatrixXd logits;          // C x B

  bool valid() const noexcept { return params != nullptr; }
  Eigen::Index batch_size() const noexcept { return logits.cols(); }
};

struct HeadGradients {
  HeadParams params;
  Eigen::MatrixXd text;  // D x B, gradient w.r.t. the input embeddings
};

/// Input mapper, aggregator, projection, residual stack and classifier.
class ClassificationHead {
 public:
  ClassificationHead() = default;
  ClassificationHead(HeadConfig config, HeadParams params);

  /// Xavier-uniform weights, zero biases, deterministic per seed.
  static HeadParams init_params(const HeadConfig& config, std::uint64_t seed);

  const HeadConfig& config() const noexcept { return config_; }
  HeadParams& params() noexcept { return params_; }
  const HeadParams& params() const noexcept { return params_; }

  DropoutSample sample_dropout(const RelevantIntentsMask& mask, Rng& rng) const;

  /// Batch forward. An empty `dropout` span means eval mode; otherwise one
  /// sample per column.
  HeadCache forward(const Eigen::MatrixXd& text, std::span<const RelevantIntentsMask> masks,
                    std::span<const DropoutSample> dropout = {}) const;

  /// Single-example forward; train mode draws dropout from `rng`.
  HeadCache forward(const Eigen::VectorXd& text, const RelevantIntentsMask& mask, Mode mode,
                    Rng* rng = nullptr) const;

  /// Exact gradients of sum over columns of <dlogits, logits>.
  HeadGradients backward(const HeadCache& cache, const Eigen::MatrixXd& dlogits) const;

  /// The pooled intents embedding v for one mask (eval semantics).
  Eigen::VectorXd intents_embedding(const RelevantIntentsMask& mask) const;

 private:
  void check_mask(const RelevantIntentsMask& mask) const;

  HeadConfig config_;
  HeadParams params_;
};

}  // namespace intentscale
