#pragma once

// The two neural classifiers over EmbeddedMessage inputs, their training
// loop, and seeded random hyperparameter search.
//
// CNN (input = one-channel kMaxWords x width image):
//   conv(100, 5x1, stride 2x1) -> batchnorm -> relu -> maxpool(5x1)
//   conv(200, 3x1, stride 2x1) -> batchnorm -> relu -> maxpool(3x1)
//   dropout(0.5) -> dense(200) -> batchnorm -> relu -> dense(4) -> softmax
// RNN:
//   GRU over all kMaxWords rows (padding included), final hidden state
//   -> dense(4) -> softmax

#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/error.hpp"
#include "stagegate/features.hpp"
#include "stagegate/nncore.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

struct ConvBlock {
  std::size_t filters = 100;
  std::size_t kh = 5, kw = 1;
  std::size_t sh = 2, sw = 1;
  std::size_t pool_h = 5, pool_w = 1;
};

struct CnnArch {
  std::size_t rows = kMaxWords;
  std::size_t width = 0;
  std::vector<ConvBlock> blocks{{100, 5, 1, 2, 1, 5, 1}, {200, 3, 1, 2, 1, 3, 1}};
  double dropout = 0.5;
  std::size_t dense = 200;
  bool batchnorm = true;
};

struct RnnArch {
  std::size_t rows = kMaxWords;  // unroll length
  std::size_t input_dim = 0;
  std::size_t hidden = 128;
  nn::GruActivation activation = nn::GruActivation::Relu;
  bool skip_padding = true;  // zero rows leave the hidden state unchanged
};

inline nlohmann::json to_json(const CnnArch& a) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : a.blocks) {
    blocks.push_back({{"filters", b.filters}, {"kernel", {b.kh, b.kw}}, {"stride", {b.sh, b.sw}},
                      {"pool", {b.pool_h, b.pool_w}}});
  }
  return {{"kind", "cnn"}, {"rows", a.rows}, {"width", a.width}, {"blocks", blocks},
          {"dropout", a.dropout}, {"dense", a.dense}, {"batchnorm", a.batchnorm}};
}

inline CnnArch cnn_arch_from_json(const nlohmann::json& j) {
  CnnArch a;
  a.rows = j.at("rows").get<std::size_t>();
  a.width = j.at("width").get<std::size_t>();
  a.blocks.clear();
  for (const auto& b : j.at("blocks")) {
    ConvBlock c;
    c.filters = b.at("filters").get<std::size_t>();
    c.kh = b.at("kernel")[0].get<std::size_t>();
    c.kw = b.at("kernel")[1].get<std::size_t>();
    c.sh = b.at("stride")[0].get<std::size_t>();
    c.sw = b.at("stride")[1].get<std::size_t>();
    c.pool_h = b.at("pool")[0].get<std::size_t>();
    c.pool_w = b.at("pool")[1].get<std::size_t>();
    a.blocks.push_back(c);
  }
  a.dropout = j.at("dropout").get<double>();
  a.dense = j.at("dense").get<std::size_t>();
  a.batchnorm = j.at("batchnorm").get<bool>();
  return a;
}

inline nlohmann::json to_json(const RnnArch& a) {
  return {{"kind", "rnn"}, {"rows", a.rows}, {"input_dim", a.input_dim}, {"hidden", a.hidden},
          {"activation", a.activation == nn::GruActivation::Relu ? "relu" : "tanh"},
          {"skip_padding", a.skip_padding}};
}

inline RnnArch rnn_arch_from_json(const nlohmann::json& j) {
  RnnArch a;
  a.rows = j.at("rows").get<std::size_t>();
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.hidden = j.at("hidden").get<std::size_t>();
  a.activation = j.at("activation").get<std::string>() == "tanh" ? nn::GruActivation::Tanh : nn::GruActivation::Relu;
  a.skip_padding = j.value("skip_padding", a.skip_padding);
  return a;
}

/// Appends the CNN layer chain to `net`.
template <typename T>
void build_cnn_layers(const CnnArch& a, nn::Sequential<T>& net, std::uint64_t seed) {
  if (a.width < 3) throw Error(ErrorCode::FeatureWidthTooSmall, "CNN feature width must be >= 3");
  nn::Shape s{1, 1, a.rows, a.width};
  std::size_t channels = 1;
  for (const auto& b : a.blocks) {
    s = net.template add<nn::Conv2d<T>>(channels, b.filters, b.kh, b.kw, b.sh, b.sw).output_shape(s);
    if (a.batchnorm) net.template add<nn::BatchNorm<T>>(b.filters);
    net.template add<nn::Relu<T>>();
    s = net.template add<nn::MaxPool2d<T>>(b.pool_h, b.pool_w).output_shape(s);
    channels = b.filters;
  }
  net.template add<nn::Dropout<T>>(a.dropout, derive_seed(seed, "dropout"));
  const std::size_t flat = s[1] * s[2] * s[3];
  net.template add<nn::Dense<T>>(flat, a.dense);
  if (a.batchnorm) net.template add<nn::BatchNorm<T>>(a.dense);
  net.template add<nn::Relu<T>>();
  net.template add<nn::Dense<T>>(a.dense, kNumClasses);
}

template <typename T>
void build_rnn_layers(const RnnArch& a, nn::Sequential<T>& net) {
  if (a.input_dim < 1 || a.hidden < 1) throw Error(ErrorCode::InvalidConfig, "RNN dimensions must be >= 1");
  net.template add<nn::Gru<T>>(a.input_dim, a.hidden, a.activation, a.skip_padding);
  net.template add<nn::Dense<T>>(a.hidden, kNumClasses);
}

enum class ModelKind { Cnn, Rnn };

/// Throws InvariantViolation when a padded row carries data.
inline void check_padding(const EmbeddedMessage& e) {
  for (std::size_t i = e.true_length * e.width; i < e.data.size(); ++i) {
    if (e.data[i] != 0.0f)
      throw Error(ErrorCode::InvariantViolation,
                  "embedded message has a nonzero value in padded row " + std::to_string(i / e.width));
  }
}

struct Prediction {
  StageLabel label = StageLabel::Preparedness;
  std::array<double, kNumClasses> probs{};
};

class NeuralModel {
 public:
  NeuralModel() = default;
  NeuralModel(NeuralModel&&) = default;
  NeuralModel& operator=(NeuralModel&&) = default;

  ModelKind kind() const { return kind_; }
  std::size_t rows() const { return rows_; }
  std::size_t width() const { return width_; }
  /// Flattened input length (rows x width).
  std::size_t input_length() const { return rows_ * width_; }
  const nlohmann::json& arch() const { return arch_; }
  nn::Sequential<float>& net() { return net_; }

  static NeuralModel cnn(const CnnArch& a, std::uint64_t seed = 1) {
    NeuralModel m;
    m.kind_ = ModelKind::Cnn;
    m.rows_ = a.rows;
    m.width_ = a.width;
    m.arch_ = to_json(a);
    build_cnn_layers(a, m.net_, seed);
    Rng rng(derive_seed(seed, "init"));
    m.net_.init(rng);
    return m;
  }

  static NeuralModel rnn(const RnnArch& a, std::uint64_t seed = 1) {
    NeuralModel m;
    m.kind_ = ModelKind::Rnn;
    m.rows_ = a.rows;
    m.width_ = a.input_dim;
    m.arch_ = to_json(a);
    build_rnn_layers(a, m.net_);
    Rng rng(derive_seed(seed, "init"));
    m.net_.init(rng);
    return m;
  }

  /// Statically derived per-layer shapes for a batch of one.
  std::vector<nn::Shape> shape_chain() const { return net_.shape_chain({1, 1, rows_, width_}); }

  nn::Tensor<float> batch(std::span<const EmbeddedMessage> xs, std::span<const std::size_t> idx) const {
    nn::Tensor<float> t({idx.size(), 1, rows_, width_});
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& e = xs[idx[k]];
      if (e.width != width_ || e.data.size() != rows_ * width_)
        throw Error(ErrorCode::ShapeMismatch, "input width " + std::to_string(e.width) + " differs from model width " +
                                                  std::to_string(width_));
      check_padding(e);
      std::copy(e.data.begin(), e.data.end(), t.item(k));
    }
    return t;
  }

  std::vector<Prediction> predict(std::span<const EmbeddedMessage> xs, std::size_t batch_size = 100) {
    std::vector<Prediction> out;
    out.reserve(xs.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < xs.size(); start += batch_size) {
      idx.clear();
      for (std::size_t i = start; i < std::min(xs.size(), start + batch_size); ++i) idx.push_back(i);
      const auto probs = nn::softmax(net_.forward(batch(xs, idx), false));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        Prediction p;
        std::size_t best = 0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          p.probs[c] = probs.item(k)[c];
          if (p.probs[c] > p.probs[best]) best = c;
        }
        p.label = label_from_index(best);
        out.push_back(p);
      }
    }
    return out;
  }

  Prediction predict(const EmbeddedMessage& x) { return predict(std::span<const EmbeddedMessage>(&x, 1)).front(); }

  /// Header line (architecture descriptor plus `extra`) followed by the
  /// binary parameter dump.
  std::string serialize(const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json head = {{"format", "stagegate-nn"}, {"version", 1}, {"arch", arch_}, {"extra", extra}};
    return head.dump() + "\n" + nn::serialize_params(net_.params());
  }

  static NeuralModel deserialize(std::string_view s, nlohmann::json* extra = nullptr) {
    const auto nl = s.find('\n');
    if (nl == std::string_view::npos) throw Error(ErrorCode::FormatError, "missing model header");
    nlohmann::json head;
    try {
      head = nlohmann::json::parse(s.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::FormatError, std::string("bad model header: ") + e.what(), 1);
    }
    if (head.value("format", "") != "stagegate-nn") throw Error(ErrorCode::FormatError, "not a neural model file", 1);
    const auto& arch = head.at("arch");
    NeuralModel m = arch.at("kind") == "cnn" ? cnn(cnn_arch_from_json(arch)) : rnn(rnn_arch_from_json(arch));
    nn::deserialize_params(s.substr(nl + 1), m.net_.params());
    if (extra) *extra = head.value("extra", nlohmann::json::object());
    return m;
  }

 private:
  ModelKind kind_ = ModelKind::Cnn;
  std::size_t rows_ = kMaxWords;
  std::size_t width_ = 0;
  nlohmann::json arch_;
  nn::Sequential<float> net_;
};

inline NeuralModel build_cnn(std::size_t feature_width, std::uint64_t seed = 1) {
  CnnArch a;
  a.width = feature_width;
  return NeuralModel::cnn(a, seed);
}

inline NeuralModel build_rnn(std::size_t input_dim, std::size_t hidden = 128, std::uint64_t seed = 1) {
  RnnArch a;
  a.input_dim = input_dim;
  a.hidden = hidden;
  return NeuralModel::rnn(a, seed);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch = 50;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  bool early_stopping = false;
  std::size_t patience = 3;  // epochs without training-loss improvement
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;

  void validate() const {
    if (!(lr > 0)) throw Error(ErrorCode::InvalidConfig, "learning rate must be > 0");
    if (batch < 1) throw Error(ErrorCode::InvalidConfig, "batch size must be >= 1");
    if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  }
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Minibatch training. Each epoch visits a fresh seeded permutation; the
/// last short batch is kept.
inline TrainHistory train_model(NeuralModel& model, std::span<const EmbeddedMessage> xs,
                                std::span<const StageLabel> ys, const TrainConfig& cfg,
                                const std::function<void(std::size_t, double)>& on_epoch = {}) {
  cfg.validate();
  if (xs.empty()) throw Error(ErrorCode::EmptyData, "no training examples");
  if (xs.size() != ys.size()) throw Error(ErrorCode::LengthMismatch, "inputs and labels differ in length");
  for (const auto& x : xs) {
    if (x.width != model.width()) throw Error(ErrorCode::ShapeMismatch, "inconsistent feature widths");
  }
  auto& net = model.net();
  nn::OptimizerConfig oc;
  oc.kind = cfg.optimizer;
  oc.lr = cfg.lr;
  nn::Optimizer<float> opt(net.params(), oc);
  Rng rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  TrainHistory hist;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::vector<std::size_t> gold;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      gold.clear();
      for (auto i : idx) gold.push_back(label_index(ys[i]));
      net.zero_grad();
      auto out = net.forward(model.batch(xs, idx), true);
      auto xr = nn::softmax_xent(out, gold);
      net.backward(xr.grad);
      opt.step();
      total += xr.loss * static_cast<double>(idx.size());
    }
    const double loss = total / static_cast<double>(xs.size());
    hist.epoch_loss.push_back(loss);
    if (on_epoch) on_epoch(epoch, loss);
    if (cfg.early_stopping) {
      if (loss < best) {
        best = loss;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  return hist;
}

// ---------------------------------------------------------------------------
// Random search

struct SearchAxis {
  enum class Kind { Uniform, LogUniform, Int, Choice };
  std::string name;
  Kind kind = Kind::Uniform;
  double lo = 0, hi = 0;                 // Int: inclusive integer bounds
  std::vector<nlohmann::json> choices;  // Choice only
};

using SearchSpace = std::vector<SearchAxis>;

struct Trial {
  std::size_t index = 0;
  nlohmann::json config;
  double score = 0;
};

struct SearchResult {
  nlohmann::json best;
  double best_score = 0;
  std::vector<Trial> log;
};

inline nlohmann::json sample_config(const SearchSpace& space, Rng& rng) {
  nlohmann::json c = nlohmann::json::object();
  for (const auto& a : space) {
    switch (a.kind) {
      case SearchAxis::Kind::Uniform: c[a.name] = rng.uniform(a.lo, a.hi); break;
      case SearchAxis::Kind::LogUniform: c[a.name] = std::exp(rng.uniform(std::log(a.lo), std::log(a.hi))); break;
      case SearchAxis::Kind::Int: {
        const auto lo = static_cast<long long>(std::llround(a.lo)), hi = static_cast<long long>(std::llround(a.hi));
        c[a.name] = lo + static_cast<long long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        break;
      }
      case SearchAxis::Kind::Choice: c[a.name] = a.choices[rng.below(a.choices.size())]; break;
    }
  }
  return c;
}

/// Evaluates `trials` seeded samples; the first config with the highest
/// objective wins.
inline SearchResult random_search(const SearchSpace& space, std::size_t trials, std::uint64_t seed,
                                  const std::function<double(const nlohmann::json&)>& objective) {
  if (space.empty()) throw Error(ErrorCode::EmptySpace, "search space has no axes");
  if (trials < 1) throw Error(ErrorCode::InvalidConfig, "trials must be >= 1");
  for (const auto& a : space) {
    if (a.kind == SearchAxis::Kind::Choice && a.choices.empty())
      throw Error(ErrorCode::EmptySpace, "axis '" + a.name + "' has no choices");
    if (a.kind != SearchAxis::Kind::Choice && a.hi < a.lo)
      throw Error(ErrorCode::InvalidConfig, "axis '" + a.name + "' has hi < lo");
    if (a.kind == SearchAxis::Kind::LogUniform && !(a.lo > 0))
      throw Error(ErrorCode::InvalidConfig, "log-uniform axis '" + a.name + "' needs lo > 0");
  }
  Rng rng(derive_seed(seed, "random-search"));
  SearchResult r;
  for (std::size_t t = 0; t < trials; ++t) {
    Trial tr;
    tr.index = t;
    tr.config = sample_config(space, rng);
    tr.score = objective(tr.config);
    if (t == 0 || tr.score > r.best_score) {
      r.best_score = tr.score;
      r.best = tr.config;
    }
    r.log.push_back(std::move(tr));
  }
  return r;
}

inline std::string trial_log_csv(const SearchResult& r) {
  std::string out = "trial,score,config\n";
  for (const auto& t : r.log) out += std::to_string(t.index) + "," + format_double(t.score) + "," + detail::csv_escape(t.config.dump()) + "\n";
  return out;
}

}  // namespace stagegate
