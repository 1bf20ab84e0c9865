#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intentscale/catalog.hpp"
#include "intentscale/corpus.hpp"
#include "intentscale/model.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

struct CrossEntropy {
  double loss = 0.0;
  Eigen::VectorXd grad;  // softmax - onehot(gold)
};

/// -log softmax(logits)[gold] with max subtraction.
CrossEntropy cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, IntentId gold);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Flips each coordinate independently with probability k.
RelevantIntentsMask inject_noise(const RelevantIntentsMask& mask, double k, Rng& rng);

/// Patience-based stopping on a validation metric (lower is better).
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records the next epoch's value; returns true if it is a new best.
  bool update(double value);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  /// 1-based epoch of the best value so far; 0 before the first update.
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_value() const noexcept { return best_; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
  TrainConfig train;
};

struct TrainObserver {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Builds an untrained bundle (seeded init) for the given configuration.
ModelBundle init_model(const IntentCatalog& catalog, ModelConfig config);

/// Mini-batch cross-entropy training with AdamW, per-(example, epoch) mask
/// noise, and early stopping on validation loss. Returns the parameters of
/// the best validation epoch.
ModelBundle train(const DatasetSplit& split, const ClientRegistry& clients, const IntentCatalog& catalog,
                  ModelConfig config, const TrainObserver& observer = {});

/// Mean eval-mode cross-entropy (no noise, no dropout).
double evaluate_loss(const ModelBundle& model, std::span<const LabeledExample> examples,
                     const ClientRegistry& clients);

/// Gradients of one example's loss w.r.t. every model tensor.
struct ModelGradients {
  HeadParams head;
  std::map<std::uint32_t, Eigen::VectorXd> encoder_columns;
};

struct GradcheckSample {
  std::string text;
  RelevantIntentsMask mask;
  IntentId gold = 0;
  /// Frozen train-mode dropout; absent means dropout disabled.
  std::optional<DropoutSample> dropout;
};

struct GradcheckOptions {
  double epsilon = 1e-5;
  std::size_t coordinates = 256;
  std::uint64_t seed = 0;
  /// Floor on the relative-error denominator, so coordinates whose true
  /// derivative is ~0 are judged on absolute error.
  double denominator_floor = 1e-6;
  /// Test hook applied to the analytic gradients before comparison.
  std::function<void(ModelGradients&)> corrupt;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_tensor;
  double loss = 0.0;
};

double sample_loss(const ModelBundle& model, const GradcheckSample& sample);
ModelGradients sample_gradients(const ModelBundle& model, const GradcheckSample& sample);

/// Central differences over a random subset of coordinates drawn from every
/// head tensor and the encoder columns the sample touches.
GradcheckReport gradcheck(const ModelBundle& model, const GradcheckSample& sample, const GradcheckOptions& options = {});

}  // namespace intentscale
