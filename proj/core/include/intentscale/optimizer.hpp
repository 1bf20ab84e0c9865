#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace intentscale {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// A parameter tensor paired with its gradient buffer.
struct ParamSlot {
  std::string name;
  double* value = nullptr;
  const double* grad = nullptr;
  std::size_t size = 0;
};

/// Adam with decoupled weight decay: every parameter shrinks by
/// lr * wd * theta each step whether or not it received a gradient.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  const AdamWConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// Slots must keep the same order and sizes across calls.
  void step(const std::vector<ParamSlot>& slots);

 private:
  AdamWConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Eigen::ArrayXd> first_;
  std::vector<Eigen::ArrayXd> second_;
};

}  // namespace intentscale
