#include "intentscale/optimizer.hpp"

#include <cmath>

#include "intentscale/error.hpp"

namespace intentscale {

void AdamW::step(const std::vector<ParamSlot>& slots) {
  if (first_.empty()) {
    for (const auto& slot : slots) {
      first_.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(slot.size)));
      second_.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(slot.size)));
    }
  }
  if (slots.size() != first_.size()) throw Error(ErrorCode::shape_mismatch, "optimizer slot layout changed");

  ++step_;
  const auto& c = config_;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  const double step_size = c.learning_rate / correction1;
  const double inv_sqrt_c2 = 1.0 / std::sqrt(correction2);
  const double decay = 1.0 - c.learning_rate * c.weight_decay;

  for (std::size_t s = 0; s < slots.size(); ++s) {
    const auto& slot = slots[s];
    if (static_cast<Eigen::Index>(slot.size) != first_[s].size()) {
      throw Error(ErrorCode::shape_mismatch, "optimizer slot " + slot.name + " changed size");
    }
    const auto n = static_cast<Eigen::Index>(slot.size);
    Eigen::Map<Eigen::ArrayXd> theta(slot.value, n);
    const Eigen::Map<const Eigen::ArrayXd> g(slot.grad, n);
    auto& m = first_[s];
    auto& v = second_[s];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    theta = theta * decay - step_size * m / (v.sqrt() * inv_sqrt_c2 + c.eps);
  }
}

}  // namespace intentscale
