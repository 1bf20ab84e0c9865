#include <algorithm>
#include <cmath>

#include "intentscale/error.hpp"
#include "intentscale/trainer.hpp"

namespace intentscale {

namespace {

HeadCache sample_forward(const ModelBundle& model, const GradcheckSample& sample) {
  const Eigen::MatrixXd e = model.encoder.encode(sample.text);
  if (sample.dropout) return model.head.forward(e, std::span(&sample.mask, 1), std::span(&*sample.dropout, 1));
  return model.head.forward(e, std::span(&sample.mask, 1));
}

struct Coordinate {
  std::size_t tensor;
  std::size_t offset;
};

}  // namespace

double sample_loss(const ModelBundle& model, const GradcheckSample& sample) {
  return cross_entropy(sample_forward(model, sample).logits.col(0), sample.gold).loss;
}

ModelGradients sample_gradients(const ModelBundle& model, const GradcheckSample& sample) {
  const auto cache = sample_forward(model, sample);
  const auto ce = cross_entropy(cache.logits.col(0), sample.gold);
  auto grads = model.head.backward(cache, ce.grad);
  ModelGradients out;
  out.head = std::move(grads.params);
  out.encoder_columns = model.encoder.encode_backward(sample.text, grads.text.col(0));
  return out;
}

GradcheckReport gradcheck(const ModelBundle& model, const GradcheckSample& sample, const GradcheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw Error(ErrorCode::invalid_argument, "gradcheck epsilon must be positive");
  ModelBundle probe = model;
  auto analytic = sample_gradients(probe, sample);
  if (options.corrupt) options.corrupt(analytic);

  // Tensor table: every head tensor, then one pseudo-tensor per touched
  // encoder column.
  struct Tensor {
    std::string name;
    double* value;
    const double* grad;
    std::size_t size;
  };
  std::vector<Tensor> tensors;
  std::vector<std::pair<std::string, const double*>> grad_views;
  analytic.head.for_each([&](const std::string& name, const double* data, std::size_t) { grad_views.emplace_back(name, data); });
  std::size_t index = 0;
  probe.head.params().for_each([&](const std::string& name, double* data, std::size_t n) {
    if (n > 0) tensors.push_back({name, data, grad_views[index].second, n});
    ++index;
  });
  for (const auto& [bucket, grad] : analytic.encoder_columns) {
    tensors.push_back({"encoder.table[:," + std::to_string(bucket) + "]", probe.encoder.table().col(bucket).data(),
                       grad.data(), static_cast<std::size_t>(grad.size())});
  }
  if (tensors.empty()) return {};

  // Spread the budget evenly over tensors (encoder columns share one share).
  Rng rng(options.seed);
  std::vector<Coordinate> coords;
  const std::size_t head_tensors = tensors.size() - analytic.encoder_columns.size();
  const std::size_t groups = head_tensors + (analytic.encoder_columns.empty() ? 0 : 1);
  const std::size_t per_group = (options.coordinates + groups - 1) / groups;
  const auto pick = [&](std::size_t first, std::size_t last) {
    std::vector<Coordinate> pool;
    for (std::size_t t = first; t < last; ++t) {
      for (std::size_t k = 0; k < tensors[t].size; ++k) pool.push_back({t, k});
    }
    rng.shuffle(std::span(pool));
    pool.resize(std::min(pool.size(), per_group));
    coords.insert(coords.end(), pool.begin(), pool.end());
  };
  for (std::size_t t = 0; t < head_tensors; ++t) pick(t, t + 1);
  if (!analytic.encoder_columns.empty()) pick(head_tensors, tensors.size());

  GradcheckReport report;
  report.loss = sample_loss(probe, sample);
  for (const auto& c : coords) {
    auto& t = tensors[c.tensor];
    double& value = t.value[c.offset];
    const double original = value;
    value = original + options.epsilon;
    probe.head.params().version += 1;
    const double up = sample_loss(probe, sample);
    value = original - options.epsilon;
    const double down = sample_loss(probe, sample);
    value = original;
    const double numeric = (up - down) / (2.0 * options.epsilon);
    const double exact = t.grad[c.offset];
    const double denom = std::max({std::abs(numeric), std::abs(exact), options.denominator_floor});
    const double rel = std::abs(numeric - exact) / denom;
    if (report.coordinates_checked == 0 || rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_tensor = t.name;
    }
    ++report.coordinates_checked;
  }
  return report;
}

}  // namespace intentscale
