#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace intentscale {

struct EncoderConfig {
  std::size_t buckets = std::size_t{1} << 15;
  std::size_t dim = 64;
  /// Only FNV-1a-64 is implemented; kept in checkpoints for forward
  /// compatibility.
  std::string hash = "fnv1a64";
  bool case_fold = true;

  void validate() const;
};

/// Lowercases ASCII letters (when folding), splits on maximal runs of
/// non-alphanumeric ASCII and drops empty pieces. Bytes >= 0x80 count as
/// alphanumeric so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text, bool case_fold = true);

/// Interface for anything that turns ticket text into a fixed-size vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual Eigen::VectorXd encode(std::string_view text) const = 0;
};

/// Trainable hashed embedding bag: the embedding is the mean of the table
/// columns selected by FNV-1a-64(token) mod buckets.
class HashedBagEncoder final : public TextEncoder {
 public:
  HashedBagEncoder() = default;
  explicit HashedBagEncoder(EncoderConfig config);

  const EncoderConfig& config() const noexcept { return config_; }
  std::size_t dim() const override { return config_.dim; }

  /// dim x buckets; column b is the embedding of bucket b.
  Eigen::MatrixXd& table() noexcept { return table_; }
  const Eigen::MatrixXd& table() const noexcept { return table_; }

  /// uniform(-a, a) with a = sqrt(6 / (buckets + dim)).
  void init(std::uint64_t seed);

  std::uint32_t bucket(std::string_view token) const noexcept;
  std::vector<std::uint32_t> buckets(std::string_view text) const;

  Eigen::VectorXd encode(std::string_view text) const override;
  Eigen::VectorXd encode_buckets(std::span<const std::uint32_t> buckets) const;

  /// Adds upstream / n to the gradient column of every token occurrence.
  void backward(std::span<const std::uint32_t> buckets, const Eigen::Ref<const Eigen::VectorXd>& upstream,
                Eigen::Ref<Eigen::MatrixXd> table_grad) const;

  /// Sparse form of the same gradient, keyed by bucket.
  std::map<std::uint32_t, Eigen::VectorXd> encode_backward(std::string_view text,
                                                           const Eigen::Ref<const Eigen::VectorXd>& upstream) const;

 private:
  EncoderConfig config_;
  Eigen::MatrixXd table_;
};

}  // namespace intentscale
