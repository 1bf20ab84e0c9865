#include "intentscale/encoder.hpp"

#include <cmath>

#include "intentscale/error.hpp"
#include "intentscale/rng.hpp"

namespace intentscale {

void EncoderConfig::validate() const {
  if (buckets == 0 || dim == 0) throw Error(ErrorCode::invalid_argument, "encoder buckets and dim must be positive");
  if (hash != "fnv1a64") throw Error(ErrorCode::invalid_argument, "unsupported token hash: " + hash);
}

std::vector<std::string> tokenize(std::string_view text, bool case_fold) {
  std::vector<std::string> tokens;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    const bool word = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
    if (!word) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
      continue;
    }
    current += (case_fold && c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : raw;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

HashedBagEncoder::HashedBagEncoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  table_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(config_.dim), static_cast<Eigen::Index>(config_.buckets));
}

void HashedBagEncoder::init(std::uint64_t seed) {
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(config_.buckets + config_.dim));
  for (Eigen::Index j = 0; j < table_.cols(); ++j) {
    for (Eigen::Index i = 0; i < table_.rows(); ++i) table_(i, j) = rng.uniform(-a, a);
  }
}

std::uint32_t HashedBagEncoder::bucket(std::string_view token) const noexcept {
  return static_cast<std::uint32_t>(fnv1a64(token) % config_.buckets);
}

std::vector<std::uint32_t> HashedBagEncoder::buckets(std::string_view text) const {
  const auto tokens = tokenize(text, config_.case_fold);
  std::vector<std::uint32_t> out;
  out.reserve(tokens.size());
  for (const auto& token : tokens) out.push_back(bucket(token));
  return out;
}

Eigen::VectorXd HashedBagEncoder::encode(std::string_view text) const { return encode_buckets(buckets(text)); }

Eigen::VectorXd HashedBagEncoder::encode_buckets(std::span<const std::uint32_t> buckets) const {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.dim));
  if (buckets.empty()) return e;
  for (auto b : buckets) e += table_.col(b);
  e /= static_cast<double>(buckets.size());
  return e;
}

void HashedBagEncoder::backward(std::span<const std::uint32_t> buckets,
                                const Eigen::Ref<const Eigen::VectorXd>& upstream,
                                Eigen::Ref<Eigen::MatrixXd> table_grad) const {
  if (buckets.empty()) return;
  const double scale = 1.0 / static_cast<double>(buckets.size());
  for (auto b : buckets) table_grad.col(b) += scale * upstream;
}

std::map<std::uint32_t, Eigen::VectorXd> HashedBagEncoder::encode_backward(
    std::string_view text, const Eigen::Ref<const Eigen::VectorXd>& upstream) const {
  const auto ids = buckets(text);
  std::map<std::uint32_t, Eigen::VectorXd> grads;
  if (ids.empty()) return grads;
  const double scale = 1.0 / static_cast<double>(ids.size());
  for (auto b : ids) {
    auto [it, inserted] = grads.try_emplace(b, Eigen::VectorXd::Zero(upstream.size()));
    it->second += scale * upstream;
  }
  return grads;
}

}  // namespace intentscale
