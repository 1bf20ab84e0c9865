#include "intentscale/model.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "intentscale/error.hpp"

namespace intentscale {

TrainConfig TrainConfig::paper_preset() {
  TrainConfig config;
  config.learning_rate = 1e-6;
  return config;
}

void TrainConfig::validate() const {
  const auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_argument, what); };
  if (batch_size == 0) fail("batch size must be at least 1");
  if (max_epochs == 0) fail("max epochs must be at least 1");
  if (patience == 0) fail("patience must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
  if (weight_decay < 0.0) fail("weight decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) fail("noise rate must lie in [0, 1]");
}

Eigen::VectorXd ModelBundle::logits(std::string_view text, const RelevantIntentsMask& mask) const {
  const Eigen::VectorXd e = encoder.encode(text);
  return head.forward(e, mask, Mode::eval).logits.col(0);
}

Eigen::MatrixXd ModelBundle::logits(std::span<const std::string> texts,
                                    std::span<const RelevantIntentsMask> masks) const {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(encoder.dim()), static_cast<Eigen::Index>(texts.size()));
  for (std::size_t b = 0; b < texts.size(); ++b) e.col(static_cast<Eigen::Index>(b)) = encoder.encode(texts[b]);
  return head.forward(e, masks).logits;
}

void ModelBundle::check_catalog(const IntentCatalog& catalog) const {
  if (catalog.fingerprint() != catalog_fingerprint || catalog.size() != num_classes()) {
    throw Error(ErrorCode::fingerprint_mismatch, "catalog fingerprint " + fingerprint_hex(catalog.fingerprint()) +
                                                     " does not match model fingerprint " +
                                                     fingerprint_hex(catalog_fingerprint));
  }
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

namespace {

constexpr std::string_view kMagic = "INTSCKPT";
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint8_t kJsonSection = 0;
constexpr std::uint8_t kTensorSection = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  void name(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  void json_section(std::string_view section, const nlohmann::ordered_json& value) {
    name(section);
    u8(kJsonSection);
    const auto text = value.dump();
    u64(text.size());
    bytes(text);
  }

  template <class Derived>
  void tensor_section(std::string_view section, const Eigen::DenseBase<Derived>& tensor) {
    name(section);
    u8(kTensorSection);
    u64(static_cast<std::uint64_t>(tensor.rows()));
    u64(static_cast<std::uint64_t>(tensor.cols()));
    // Column-major order.
    for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
      for (Eigen::Index i = 0; i < tensor.rows(); ++i) f64(tensor(i, j));
    }
  }

  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  bool done() const { return pos_ == data_.size(); }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::parse_error, "truncated checkpoint");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json meta_json(const ModelBundle& b) {
  const auto& enc = b.encoder.config();
  const auto& head = b.head.config();
  const auto& tc = b.train_config;
  nlohmann::ordered_json meta;
  meta["catalog_fingerprint"] = fingerprint_hex(b.catalog_fingerprint);
  meta["encoder"] = {{"buckets", enc.buckets}, {"dim", enc.dim}, {"hash", enc.hash}, {"case_fold", enc.case_fold}};
  meta["head"] = {{"text_dim", head.text_dim},
                  {"intents_embed_dim", head.intents_embed_dim},
                  {"aggregator", to_string(head.aggregator)},
                  {"projection_dim", head.projection_dim},
                  {"num_residual_layers", head.num_residual_layers},
                  {"intents_dropout", head.intents_dropout},
                  {"residual_dropout", head.residual_dropout},
                  {"num_classes", head.num_classes},
                  {"use_intents_feature", head.use_intents_feature}};
  meta["train"] = {{"batch_size", tc.batch_size},       {"max_epochs", tc.max_epochs},
                   {"patience", tc.patience},           {"learning_rate", tc.learning_rate},
                   {"weight_decay", tc.weight_decay},   {"beta1", tc.beta1},
                   {"beta2", tc.beta2},                 {"eps", tc.eps},
                   {"noise_rate", tc.noise_rate},       {"seed", tc.seed}};
  auto log = nlohmann::ordered_json::array();
  for (const auto& e : b.log) {
    log.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
  }
  meta["log"] = std::move(log);
  meta["best_epoch"] = b.best_epoch;
  return meta;
}

}  // namespace

std::string serialize_checkpoint(const ModelBundle& bundle) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kFormatVersion);
  const auto& p = bundle.head.params();
  const std::uint32_t sections = 1 + 1 + 2 + 2 * static_cast<std::uint32_t>(p.residual.size()) + 2 +
                                 (bundle.head.config().use_intents_feature ? 1u : 0u);
  w.u32(sections);
  w.json_section("meta", meta_json(bundle));
  w.tensor_section("encoder.table", bundle.encoder.table());
  if (bundle.head.config().use_intents_feature) w.tensor_section("head.intent_embedding", p.intent_embedding);
  w.tensor_section("head.projection", p.projection);
  w.tensor_section("head.projection_bias", p.projection_bias);
  for (std::size_t l = 0; l < p.residual.size(); ++l) {
    w.tensor_section("head.residual." + std::to_string(l) + ".weight", p.residual[l].weight);
    w.tensor_section("head.residual." + std::to_string(l) + ".bias", p.residual[l].bias);
  }
  w.tensor_section("head.classifier", p.classifier);
  w.tensor_section("head.classifier_bias", p.classifier_bias);
  return w.take();
}

ModelBundle deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw Error(ErrorCode::parse_error, "not an intentscale checkpoint");
  const auto version = r.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::parse_error, "unsupported checkpoint format version " + std::to_string(version));
  }
  const auto sections = r.u32();
  nlohmann::json meta;
  std::map<std::string, Eigen::MatrixXd> tensors;
  for (std::uint32_t s = 0; s < sections; ++s) {
    const std::string name(r.bytes(r.u32()));
    const auto kind = r.u8();
    if (kind == kJsonSection) {
      const auto text = r.bytes(r.u64());
      try {
        if (name == "meta") meta = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("checkpoint meta: ") + e.what());
      }
    } else if (kind == kTensorSection) {
      const auto rows = static_cast<Eigen::Index>(r.u64());
      const auto cols = static_cast<Eigen::Index>(r.u64());
      if (rows < 0 || cols < 0 || static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) > bytes.size()) {
        throw Error(ErrorCode::parse_error, "implausible tensor shape in section " + name);
      }
      Eigen::MatrixXd t(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) t(i, j) = r.f64();
      }
      tensors.emplace(name, std::move(t));
    } else {
      throw Error(ErrorCode::parse_error, "unknown section kind in " + name);
    }
  }
  if (!r.done()) throw Error(ErrorCode::parse_error, "trailing bytes after checkpoint sections");
  if (meta.is_null()) throw Error(ErrorCode::parse_error, "checkpoint has no meta section");

  const auto take = [&](const std::string& name) -> Eigen::MatrixXd {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorCode::parse_error, "checkpoint missing tensor " + name);
    return it->second;
  };
  const auto take_vector = [&](const std::string& name) -> Eigen::VectorXd {
    auto m = take(name);
    if (m.cols() != 1) throw Error(ErrorCode::parse_error, "tensor " + name + " is not a vector");
    return m.col(0);
  };

  ModelBundle bundle;
  try {
    const auto& enc = meta.at("encoder");
    EncoderConfig ec;
    ec.buckets = enc.at("buckets").get<std::size_t>();
    ec.dim = enc.at("dim").get<std::size_t>();
    ec.hash = enc.at("hash").get<std::string>();
    ec.case_fold = enc.at("case_fold").get<bool>();
    bundle.encoder = HashedBagEncoder(ec);
    auto table = take("encoder.table");
    if (table.rows() != bundle.encoder.table().rows() || table.cols() != bundle.encoder.table().cols()) {
      throw Error(ErrorCode::shape_mismatch, "encoder table shape mismatch");
    }
    bundle.encoder.table() = std::move(table);

    const auto& h = meta.at("head");
    HeadConfig hc;
    hc.text_dim = h.at("text_dim").get<std::size_t>();
    hc.intents_embed_dim = h.at("intents_embed_dim").get<std::size_t>();
    hc.aggregator = parse_aggregator(h.at("aggregator").get<std::string>());
    hc.projection_dim = h.at("projection_dim").get<std::size_t>();
    hc.num_residual_layers = h.at("num_residual_layers").get<std::size_t>();
    hc.intents_dropout = h.at("intents_dropout").get<double>();
    hc.residual_dropout = h.at("residual_dropout").get<double>();
    hc.num_classes = h.at("num_classes").get<std::size_t>();
    hc.use_intents_feature = h.at("use_intents_feature").get<bool>();
    HeadParams p;
    if (hc.use_intents_feature) p.intent_embedding = take("head.intent_embedding");
    p.projection = take("head.projection");
    p.projection_bias = take_vector("head.projection_bias");
    for (std::size_t l = 0; l < hc.num_residual_layers; ++l) {
      p.residual.push_back({take("head.residual." + std::to_string(l) + ".weight"),
                            take_vector("head.residual." + std::to_string(l) + ".bias")});
    }
    p.classifier = take("head.classifier");
    p.classifier_bias = take_vector("head.classifier_bias");
    bundle.head = ClassificationHead(hc, std::move(p));

    const auto& t = meta.at("train");
    auto& tc = bundle.train_config;
    tc.batch_size = t.at("batch_size").get<std::size_t>();
    tc.max_epochs = t.at("max_epochs").get<std::size_t>();
    tc.patience = t.at("patience").get<std::size_t>();
    tc.learning_rate = t.at("learning_rate").get<double>();
    tc.weight_decay = t.at("weight_decay").get<double>();
    tc.beta1 = t.at("beta1").get<double>();
    tc.beta2 = t.at("beta2").get<double>();
    tc.eps = t.at("eps").get<double>();
    tc.noise_rate = t.at("noise_rate").get<double>();
    tc.seed = t.at("seed").get<std::uint64_t>();

    for (const auto& e : meta.at("log")) {
      bundle.log.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                            e.at("validation_loss").get<double>()});
    }
    bundle.best_epoch = meta.at("best_epoch").get<std::size_t>();
    bundle.catalog_fingerprint = std::stoull(meta.at("catalog_fingerprint").get<std::string>(), nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("checkpoint meta: ") + e.what());
  }
  return bundle;
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace intentscale
