#include "intentscale/head.hpp"

#include <cmath>

#include "intentscale/error.hpp"

namespace intentscale {

std::string to_string(Aggregator aggregator) {
  switch (aggregator) {
    case Aggregator::concat: return "concat";
    case Aggregator::sum: return "sum";
    case Aggregator::mean: return "mean";
  }
  return "concat";
}

Aggregator parse_aggregator(std::string_view name) {
  if (name == "concat") return Aggregator::concat;
  if (name == "sum") return Aggregator::sum;
  if (name == "mean") return Aggregator::mean;
  throw Error(ErrorCode::invalid_argument, "unknown aggregator: " + std::string(name));
}

void HeadConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, what); };
  if (text_dim == 0 || projection_dim == 0 || num_classes == 0) fail("head dimensions must be positive");
  if (use_intents_feature && intents_embed_dim == 0) fail("intents embedding dimension must be positive");
  if (use_intents_feature && aggregator != Aggregator::concat && intents_embed_dim != text_dim) {
    fail("sum/mean aggregation requires intents_embed_dim == text_dim");
  }
  if (!(intents_dropout >= 0.0 && intents_dropout < 1.0)) fail("intents dropout must lie in [0, 1)");
  if (!(residual_dropout >= 0.0 && residual_dropout < 1.0)) fail("residual dropout must lie in [0, 1)");
}

std::size_t HeadConfig::aggregated_dim() const {
  if (use_intents_feature && aggregator == Aggregator::concat) return text_dim + intents_embed_dim;
  return text_dim;
}

HeadParams HeadParams::zeros_like(const HeadParams& other) {
  HeadParams out;
  out.intent_embedding = Eigen::MatrixXd::Zero(other.intent_embedding.rows(), other.intent_embedding.cols());
  out.projection = Eigen::MatrixXd::Zero(other.projection.rows(), other.projection.cols());
  out.projection_bias = Eigen::VectorXd::Zero(other.projection_bias.size());
  for (const auto& layer : other.residual) {
    out.residual.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                            Eigen::VectorXd::Zero(layer.bias.size())});
  }
  out.classifier = Eigen::MatrixXd::Zero(other.classifier.rows(), other.classifier.cols());
  out.classifier_bias = Eigen::VectorXd::Zero(other.classifier_bias.size());
  return out;
}

void HeadParams::for_each(const std::function<void(const std::string&, double*, std::size_t)>& fn) {
  const auto visit = [&](const std::string& name, auto& tensor) {
    fn(name, tensor.data(), static_cast<std::size_t>(tensor.size()));
  };
  visit("head.intent_embedding", intent_embedding);
  visit("head.projection", projection);
  visit("head.projection_bias", projection_bias);
  for (std::size_t l = 0; l < residual.size(); ++l) {
    visit("head.residual." + std::to_string(l) + ".weight", residual[l].weight);
    visit("head.residual." + std::to_string(l) + ".bias", residual[l].bias);
  }
  visit("head.classifier", classifier);
  visit("head.classifier_bias", classifier_bias);
}

void HeadParams::for_each(const std::function<void(const std::string&, const double*, std::size_t)>& fn) const {
  const_cast<HeadParams*>(this)->for_each(
      [&](const std::string& name, double* data, std::size_t n) { fn(name, data, n); });
}

std::size_t HeadParams::parameter_count() const {
  std::size_t total = 0;
  for_each([&](const std::string&, const double*, std::size_t n) { total += n; });
  return total;
}

ClassificationHead::ClassificationHead(HeadConfig config, HeadParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto C = static_cast<Eigen::Index>(config_.num_classes);
  const auto P = static_cast<Eigen::Index>(config_.projection_dim);
  const auto Z = static_cast<Eigen::Index>(config_.aggregated_dim());
  const auto K = static_cast<Eigen::Index>(config_.use_intents_feature ? config_.intents_embed_dim : 0);
  const bool ok = params_.intent_embedding.rows() == K && params_.intent_embedding.cols() == (K ? C : 0) &&
                  params_.projection.rows() == P && params_.projection.cols() == Z &&
                  params_.projection_bias.size() == P && params_.classifier.rows() == C &&
                  params_.classifier.cols() == P && params_.classifier_bias.size() == C &&
                  params_.residual.size() == config_.num_residual_layers;
  if (!ok) throw Error(ErrorCode::shape_mismatch, "head parameters do not match the head configuration");
  for (const auto& layer : params_.residual) {
    if (layer.weight.rows() != P || layer.weight.cols() != P || layer.bias.size() != P) {
      throw Error(ErrorCode::shape_mismatch, "residual layer shape mismatch");
    }
  }
}

HeadParams ClassificationHead::init_params(const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  const auto C = static_cast<Eigen::Index>(config.num_classes);
  const auto P = static_cast<Eigen::Index>(config.projection_dim);
  const auto Z = static_cast<Eigen::Index>(config.aggregated_dim());
  const auto K = static_cast<Eigen::Index>(config.intents_embed_dim);

  Rng rng(seed);
  const auto xavier = [&](Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-a, a);
    }
    return m;
  };

  HeadParams p;
  if (config.use_intents_feature) {
    p.intent_embedding = xavier(K, C, static_cast<double>(C), static_cast<double>(K));
  }
  p.projection = xavier(P, Z, static_cast<double>(Z), static_cast<double>(P));
  p.projection_bias = Eigen::VectorXd::Zero(P);
  for (std::size_t l = 0; l < config.num_residual_layers; ++l) {
    p.residual.push_back({xavier(P, P, static_cast<double>(P), static_cast<double>(P)), Eigen::VectorXd::Zero(P)});
  }
  p.classifier = xavier(C, P, static_cast<double>(P), static_cast<double>(C));
  p.classifier_bias = Eigen::VectorXd::Zero(C);
  return p;
}

void ClassificationHead::check_mask(const RelevantIntentsMask& mask) const {
  if (mask.size() != config_.num_classes) {
    throw Error(ErrorCode::shape_mismatch, "mask length " + std::to_string(mask.size()) + " does not match " +
                                               std::to_string(config_.num_classes) + " classes");
  }
}

DropoutSample ClassificationHead::sample_dropout(const RelevantIntentsMask& mask, Rng& rng) const {
  check_mask(mask);
  DropoutSample sample;
  sample.intent_keep.assign(config_.num_classes, 0);
  if (config_.use_intents_feature) {
    for (std::size_t i = 0; i < config_.num_classes; ++i) {
      if (mask.test(static_cast<IntentId>(i))) sample.intent_keep[i] = rng.bernoulli(config_.intents_dropout) ? 0 : 1;
    }
  }
  const double keep_scale = 1.0 / (1.0 - config_.residual_dropout);
  for (std::size_t l = 0; l < config_.num_residual_layers; ++l) {
    Eigen::VectorXd scale(static_cast<Eigen::Index>(config_.projection_dim));
    for (Eigen::Index u = 0; u < scale.size(); ++u) {
      scale(u) = rng.bernoulli(config_.residual_dropout) ? 0.0 : keep_scale;
    }
    sample.residual_scale.push_back(std::move(scale));
  }
  return sample;
}

HeadCache ClassificationHead::forward(const Eigen::MatrixXd& text, std::span<const RelevantIntentsMask> masks,
                                      std::span<const DropoutSample> dropout) const {
  const auto B = text.cols();
  const auto C = static_cast<Eigen::Index>(config_.num_classes);
  const auto D = static_cast<Eigen::Index>(config_.text_dim);
  if (text.rows() != D) throw Error(ErrorCode::shape_mismatch, "text embedding dimension mismatch");
  if (static_cast<Eigen::Index>(masks.size()) != B) throw Error(ErrorCode::shape_mismatch, "one mask per example");
  const bool train = !dropout.empty();
  if (train && static_cast<Eigen::Index>(dropout.size()) != B) {
    throw Error(ErrorCode::shape_mismatch, "one dropout sample per example");
  }

  HeadCache cache;
  cache.params = &params_;
  cache.params_version = params_.version;
  cache.train = train;
  cache.text = text;

  if (config_.use_intents_feature) {
    // v = (1/|mask|) * sum of surviving relevant rows, survivors scaled by
    // 1/(1-p) so the train-mode expectation equals the eval-mode mean.
    cache.intent_weights = Eigen::MatrixXd::Zero(C, B);
    const double survivor_scale = train ? 1.0 / (1.0 - config_.intents_dropout) : 1.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& mask = masks[static_cast<std::size_t>(b)];
      check_mask(mask);
      const auto relevant = mask.count();
      if (relevant == 0) continue;
      const double w = survivor_scale / static_cast<double>(relevant);
      for (Eigen::Index i = 0; i < C; ++i) {
        if (!mask.test(static_cast<IntentId>(i))) continue;
        if (train && !dropout[static_cast<std::size_t>(b)].intent_keep[static_cast<std::size_t>(i)]) continue;
        cache.intent_weights(i, b) = w;
      }
    }
    const Eigen::MatrixXd pooled = params_.intent_embedding * cache.intent_weights;
    switch (config_.aggregator) {
      case Aggregator::concat:
        cache.aggregated.resize(D + pooled.rows(), B);
        cache.aggregated.topRows(D) = text;
        cache.aggregated.bottomRows(pooled.rows()) = pooled;
        break;
      case Aggregator::sum: cache.aggregated = text + pooled; break;
      case Aggregator::mean: cache.aggregated = 0.5 * (text + pooled); break;
    }
  } else {
    for (const auto& mask : masks) check_mask(mask);
    cache.aggregated = text;
  }

  Eigen::MatrixXd x = params_.projection * cache.aggregated;
  x.colwise() += params_.projection_bias;
  cache.layer_inputs.push_back(x);
  for (std::size_t l = 0; l < params_.residual.size(); ++l) {
    const auto& layer = params_.residual[l];
    Eigen::MatrixXd pre = layer.weight * x;
    pre.colwise() += layer.bias;
    if (train) {
      Eigen::MatrixXd scale(pre.rows(), B);
      for (Eigen::Index b = 0; b < B; ++b) scale.col(b) = dropout[static_cast<std::size_t>(b)].residual_scale.at(l);
      pre.array() *= scale.array();
      cache.dropout_scale.push_back(std::move(scale));
    }
    Eigen::MatrixXd act = pre.array().tanh().matrix();
    x += act;
    cache.activations.push_back(std::move(act));
    cache.layer_inputs.push_back(x);
  }
  cache.logits = params_.classifier * x;
  cache.logits.colwise() += params_.classifier_bias;
  return cache;
}

HeadCache ClassificationHead::forward(const Eigen::VectorXd& text, const RelevantIntentsMask& mask, Mode mode,
                                      Rng* rng) const {
  const Eigen::MatrixXd column = text;
  if (mode == Mode::eval) return forward(column, std::span(&mask, 1));
  if (rng == nullptr) throw Error(ErrorCode::invalid_argument, "train-mode forward needs a random source");
  const auto sample = sample_dropout(mask, *rng);
  return forward(column, std::span(&mask, 1), std::span(&sample, 1));
}

HeadGradients ClassificationHead::backward(const HeadCache& cache, const Eigen::MatrixXd& dlogits) const {
  if (!cache.valid()) throw Error(ErrorCode::invalid_argument, "backward called without a forward cache");
  if (cache.params != &params_ || cache.params_version != params_.version) {
    throw Error(ErrorCode::invalid_argument, "stale forward cache: parameters changed since the forward pass");
  }
  if (dlogits.rows() != cache.logits.rows() || dlogits.cols() != cache.logits.cols()) {
    throw Error(ErrorCode::shape_mismatch, "upstream gradient shape does not match logits");
  }

  HeadGradients grads{HeadParams::zeros_like(params_), {}};
  auto& g = grads.params;
  const auto L = params_.residual.size();

  g.classifier.noalias() = dlogits * cache.layer_inputs[L].transpose();
  g.classifier_bias = dlogits.rowwise().sum();
  Eigen::MatrixXd dx = params_.classifier.transpose() * dlogits;

  for (std::size_t l = L; l-- > 0;) {
    const auto& act = cache.activations[l];
    Eigen::MatrixXd dpre = (dx.array() * (1.0 - act.array().square())).matrix();
    if (cache.train) dpre.array() *= cache.dropout_scale[l].array();
    g.residual[l].weight.noalias() = dpre * cache.layer_inputs[l].transpose();
    g.residual[l].bias = dpre.rowwise().sum();
    dx.noalias() += params_.residual[l].weight.transpose() * dpre;
  }

  g.projection.noalias() = dx * cache.aggregated.transpose();
  g.projection_bias = dx.rowwise().sum();
  const Eigen::MatrixXd dz = params_.projection.transpose() * dx;

  const auto D = static_cast<Eigen::Index>(config_.text_dim);
  if (!config_.use_intents_feature) {
    grads.text = dz;
    return grads;
  }
  Eigen::MatrixXd dpooled;
  switch (config_.aggregator) {
    case Aggregator::concat:
      grads.text = dz.topRows(D);
      dpooled = dz.bottomRows(dz.rows() - D);
      break;
    case Aggregator::sum:
      grads.text = dz;
      dpooled = dz;
      break;
    case Aggregator::mean:
      grads.text = 0.5 * dz;
      dpooled = 0.5 * dz;
      break;
  }
  g.intent_embedding.noalias() = dpooled * cache.intent_weights.transpose();
  return grads;
}

Eigen::VectorXd ClassificationHead::intents_embedding(const RelevantIntentsMask& mask) const {
  check_mask(mask);
  const auto K = static_cast<Eigen::Index>(config_.intents_embed_dim);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(config_.use_intents_feature ? K : 0);
  if (!config_.use_intents_feature) return v;
  const auto relevant = mask.members();
  if (relevant.empty()) return v;
  for (auto i : relevant) v += params_.intent_embedding.col(i);
  return v / static_cast<double>(relevant.size());
}

}  // namespace intentscale
