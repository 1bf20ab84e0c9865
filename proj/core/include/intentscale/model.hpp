#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "intentscale/catalog.hpp"
#include "intentscale/encoder.hpp"
#include "intentscale/head.hpp"

namespace intentscale {

struct TrainConfig {
  std::size_t batch_size = 512;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  /// Desk-scale default for a from-scratch encoder; see paper_preset().
  double learning_rate = 3e-3;
  double weight_decay = 0.10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Per-coordinate flip probability applied to training masks.
  double noise_rate = 0.0;
  std::uint64_t seed = 0;

  /// Preset reproducing the published fine-tuning rate (1e-6) for a
  /// pretrained encoder.
  static TrainConfig paper_preset();

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

/// Everything needed to reproduce predictions: encoder, head, catalog
/// fingerprint and the training record.
struct ModelBundle {
  HashedBagEncoder encoder;
  ClassificationHead head;
  std::uint64_t catalog_fingerprint = 0;
  TrainConfig train_config;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;

  std::size_t num_classes() const noexcept { return head.config().num_classes; }

  /// Eval-mode logits for one ticket text.
  Eigen::VectorXd logits(std::string_view text, const RelevantIntentsMask& mask) const;
  /// Eval-mode logits for a batch; column b belongs to texts[b].
  Eigen::MatrixXd logits(std::span<const std::string> texts, std::span<const RelevantIntentsMask> masks) const;

  /// Throws Error(fingerprint_mismatch) when `catalog` differs from the
  /// training catalog.
  void check_catalog(const IntentCatalog& catalog) const;
};

/// Versioned binary container: magic, format version, then named sections
/// holding either JSON config records or little-endian float64 tensors.
std::string serialize_checkpoint(const ModelBundle& bundle);
ModelBundle deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

std::string fingerprint_hex(std::uint64_t fingerprint);

}  // namespace intentscale
