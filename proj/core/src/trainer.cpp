#include "intentscale/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "intentscale/error.hpp"
#include "intentscale/optimizer.hpp"

namespace intentscale {

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double max = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - max).exp().matrix();
  return p / p.sum();
}

CrossEntropy cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits, IntentId gold) {
  if (gold >= static_cast<std::size_t>(logits.size())) {
    throw Error(ErrorCode::invalid_argument, "gold intent " + std::to_string(gold) + " outside [0, " +
                                                 std::to_string(logits.size()) + ")");
  }
  const double max = logits.maxCoeff();
  const Eigen::ArrayXd shifted = logits.array() - max;
  const Eigen::ArrayXd exp = shifted.exp();
  const double sum = exp.sum();
  CrossEntropy out;
  out.loss = std::log(sum) - shifted(gold);
  out.grad = (exp / sum).matrix();
  out.grad(gold) -= 1.0;
  return out;
}

RelevantIntentsMask inject_noise(const RelevantIntentsMask& mask, double k, Rng& rng) {
  if (!(k >= 0.0 && k <= 1.0)) throw Error(ErrorCode::invalid_argument, "noise rate must lie in [0, 1]");
  RelevantIntentsMask noisy = mask;
  if (k == 0.0) return noisy;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    if (rng.bernoulli(k)) noisy.flip(static_cast<IntentId>(i));
  }
  return noisy;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw Error(ErrorCode::invalid_argument, "patience must be at least 1");
}

bool EarlyStopping::update(double value) {
  ++epochs_;
  if (best_epoch_ == 0 || value < best_) {
    best_ = value;
    best_epoch_ = epochs_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

ModelBundle init_model(const IntentCatalog& catalog, ModelConfig config) {
  config.train.validate();
  config.head.num_classes = catalog.size();
  config.head.text_dim = config.encoder.dim;
  ModelBundle bundle;
  bundle.encoder = HashedBagEncoder(config.encoder);
  bundle.encoder.init(derive_seed(config.train.seed, 11));
  bundle.head = ClassificationHead(config.head, ClassificationHead::init_params(config.head, derive_seed(config.train.seed, 12)));
  bundle.catalog_fingerprint = catalog.fingerprint();
  bundle.train_config = config.train;
  return bundle;
}

namespace {

struct PreparedSet {
  std::vector<std::vector<std::uint32_t>> buckets;
  std::vector<RelevantIntentsMask> masks;
  std::vector<IntentId> gold;
};

PreparedSet prepare(const HashedBagEncoder& encoder, std::span<const LabeledExample> examples,
                    const ClientRegistry& clients, std::size_t num_classes) {
  PreparedSet set;
  set.buckets.reserve(examples.size());
  set.masks.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto profile = clients.find(ex.client_id);
    if (!profile) throw Error(ErrorCode::not_found, "example " + ex.ticket_id + " has unregistered client " + ex.client_id);
    if (ex.gold >= num_classes) throw Error(ErrorCode::invalid_argument, "gold intent out of range in " + ex.ticket_id);
    set.buckets.push_back(encoder.buckets(ex.text()));
    set.masks.push_back(profile->relevant);
    set.gold.push_back(ex.gold);
  }
  return set;
}

double mean_loss(const ModelBundle& model, const PreparedSet& set) {
  if (set.gold.empty()) return 0.0;
  constexpr std::size_t kChunk = 1024;
  const auto D = static_cast<Eigen::Index>(model.encoder.dim());
  double total = 0.0;
  for (std::size_t start = 0; start < set.gold.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, set.gold.size() - start);
    Eigen::MatrixXd e(D, static_cast<Eigen::Index>(n));
    for (std::size_t b = 0; b < n; ++b) e.col(static_cast<Eigen::Index>(b)) = model.encoder.encode_buckets(set.buckets[start + b]);
    const auto cache = model.head.forward(e, std::span(set.masks).subspan(start, n));
    for (std::size_t b = 0; b < n; ++b) {
      total += cross_entropy(cache.logits.col(static_cast<Eigen::Index>(b)), set.gold[start + b]).loss;
    }
  }
  return total / static_cast<double>(set.gold.size());
}

struct TensorView {
  std::string name;
  double* data;
  std::size_t size;
};

std::vector<TensorView> views(HeadParams& params) {
  std::vector<TensorView> out;
  params.for_each([&](const std::string& name, double* data, std::size_t n) { out.push_back({name, data, n}); });
  return out;
}

}  // namespace

double evaluate_loss(const ModelBundle& model, std::span<const LabeledExample> examples, const ClientRegistry& clients) {
  return mean_loss(model, prepare(model.encoder, examples, clients, model.num_classes()));
}

ModelBundle train(const DatasetSplit& split, const ClientRegistry& clients, const IntentCatalog& catalog,
                  ModelConfig config, const TrainObserver& observer) {
  if (split.train.empty() || split.validation.empty()) {
    throw Error(ErrorCode::invalid_argument, "training needs non-empty train and validation sets");
  }
  if (clients.num_intents() != catalog.size()) {
    throw Error(ErrorCode::shape_mismatch, "client registry and catalog disagree on the intent count");
  }
  auto model = init_model(catalog, config);
  const auto& tc = model.train_config;
  const auto C = catalog.size();
  const auto D = static_cast<Eigen::Index>(model.encoder.dim());

  const auto train_set = prepare(model.encoder, split.train, clients, C);
  const auto validation_set = prepare(model.encoder, split.validation, clients, C);

  Rng shuffle_rng(derive_seed(tc.seed, 13));
  Rng stochastic_rng(derive_seed(tc.seed, 14));
  AdamW optimizer({tc.learning_rate, tc.weight_decay, tc.beta1, tc.beta2, tc.eps});
  Eigen::MatrixXd table_grad = Eigen::MatrixXd::Zero(model.encoder.table().rows(), model.encoder.table().cols());
  EarlyStopping stopping(tc.patience);

  Eigen::MatrixXd best_table = model.encoder.table();
  HeadParams best_head = model.head.params();

  std::vector<std::size_t> order(train_set.gold.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t n = std::min(tc.batch_size, order.size() - start);
      const auto B = static_cast<Eigen::Index>(n);
      Eigen::MatrixXd e(D, B);
      std::vector<RelevantIntentsMask> masks;
      std::vector<DropoutSample> dropout;
      masks.reserve(n);
      dropout.reserve(n);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        e.col(static_cast<Eigen::Index>(b)) = model.encoder.encode_buckets(train_set.buckets[idx]);
        masks.push_back(inject_noise(train_set.masks[idx], tc.noise_rate, stochastic_rng));
        dropout.push_back(model.head.sample_dropout(masks.back(), stochastic_rng));
      }
      const auto cache = model.head.forward(e, masks, dropout);

      Eigen::MatrixXd dlogits(cache.logits.rows(), B);
      double batch_loss = 0.0;
      for (Eigen::Index b = 0; b < B; ++b) {
        auto ce = cross_entropy(cache.logits.col(b), train_set.gold[order[start + static_cast<std::size_t>(b)]]);
        batch_loss += ce.loss;
        dlogits.col(b) = ce.grad / static_cast<double>(n);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::numerical_error, "non-finite training loss at epoch " + std::to_string(epoch) +
                                                    ", step " + std::to_string(optimizer.steps() + 1) +
                                                    "; lower the learning rate");
      }
      epoch_loss += batch_loss;

      auto grads = model.head.backward(cache, dlogits);
      for (std::size_t b = 0; b < n; ++b) {
        model.encoder.backward(train_set.buckets[order[start + b]], grads.text.col(static_cast<Eigen::Index>(b)),
                               table_grad);
      }

      std::vector<ParamSlot> slots;
      slots.push_back({"encoder.table", model.encoder.table().data(), table_grad.data(),
                       static_cast<std::size_t>(table_grad.size())});
      const auto values = views(model.head.params());
      const auto gradients = views(grads.params);
      for (std::size_t s = 0; s < values.size(); ++s) {
        slots.push_back({values[s].name, values[s].data, gradients[s].data, values[s].size});
      }
      optimizer.step(slots);
      model.head.params().version += 1;

      for (std::size_t b = 0; b < n; ++b) {
        for (auto bucket : train_set.buckets[order[start + b]]) table_grad.col(bucket).setZero();
      }
    }

    EpochLog entry{epoch, epoch_loss / static_cast<double>(order.size()), mean_loss(model, validation_set)};
    if (!std::isfinite(entry.validation_loss)) {
      throw Error(ErrorCode::numerical_error, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    model.log.push_back(entry);
    if (observer.on_epoch) observer.on_epoch(entry);
    if (stopping.update(entry.validation_loss)) {
      best_table = model.encoder.table();
      best_head = model.head.params();
    }
    if (stopping.should_stop()) break;
  }

  model.encoder.table() = std::move(best_table);
  const auto version = model.head.params().version + 1;
  model.head.params() = std::move(best_head);
  model.head.params().version = version;
  model.best_epoch = stopping.best_epoch();
  return model;
}

}  // namespace intentscale
