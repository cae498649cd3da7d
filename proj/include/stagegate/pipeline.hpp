#pragma once

// End-to-end classifiers: a fitted featurizer + SVM, or an embedding table +
// neural model, with training entry points and model files.
//
// SVM model file: JSON {"format": "stagegate-svm", "version": 1,
//   "featurizer": ..., "svm": ..., "embedding_path": optional}. Loading refuses
//   a file whose SVM feature-space hash differs from its featurizer's.
// Neural model file: the nncore header line carries {"embedding_path",
//   "with_desc", "desc_scaler"} in its "extra" object.
// Embedding paths are stored relative to the model file's directory.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stagegate/embeddings.hpp"
#include "stagegate/features.hpp"
#include "stagegate/metrics.hpp"
#include "stagegate/models.hpp"
#include "stagegate/preprocess.hpp"
#include "stagegate/svm.hpp"

namespace stagegate {

inline std::vector<StageLabel> labels_of(std::span<const ProcessedMessage> pms) {
  std::vector<StageLabel> out;
  out.reserve(pms.size());
  for (const auto& pm : pms) {
    if (!pm.source.label) throw Error(ErrorCode::UnlabeledMessage, "message " + pm.source.id + " has no label");
    out.push_back(*pm.source.label);
  }
  return out;
}

/// Lowercased token surfaces per message, the sentence form used for
/// training custom embeddings.
inline std::vector<std::vector<std::string>> embedding_sentences(std::span<const ProcessedMessage> pms) {
  std::vector<std::vector<std::string>> out;
  out.reserve(pms.size());
  for (const auto& pm : pms) {
    std::vector<std::string> s;
    s.reserve(pm.tokens.size());
    for (const auto& t : pm.tokens) s.push_back(to_lower(t.surface));
    out.push_back(std::move(s));
  }
  return out;
}

/// Same as above without tagging, for raw (possibly unlabeled) corpora.
inline std::vector<std::vector<std::string>> embedding_sentences(const Dataset& d) {
  std::vector<std::vector<std::string>> out;
  out.reserve(d.size());
  for (const auto& m : d) {
    std::vector<std::string> s;
    for (const auto& t : tokenize(normalize(m.text))) s.push_back(to_lower(t.surface));
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {
inline std::string relative_to(const std::filesystem::path& target, const std::filesystem::path& file) {
  if (target.empty()) return "";
  const auto base = std::filesystem::absolute(file).parent_path();
  return std::filesystem::absolute(target).lexically_relative(base).generic_string();
}
inline std::filesystem::path resolve_from(const std::string& stored, const std::filesystem::path& file) {
  std::filesystem::path p(stored);
  if (p.is_absolute()) return p;
  return std::filesystem::absolute(file).parent_path() / p;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// SVM

struct SvmPipeline {
  Featurizer featurizer;
  SvmModel svm;
  std::filesystem::path embedding_path;  // only for mean-embedding features

  std::vector<StageLabel> predict(std::span<const ProcessedMessage> pms) const {
    std::vector<StageLabel> out;
    out.reserve(pms.size());
    for (const auto& pm : pms) out.push_back(svm.predict(featurizer.transform(pm)));
    return out;
  }

  std::string serialize(const std::filesystem::path& model_path) const {
    nlohmann::json j = {{"format", "stagegate-svm"}, {"version", 1}, {"featurizer", featurizer.to_json()},
                        {"svm", svm.to_json()}};
    if (!embedding_path.empty()) j["embedding_path"] = detail::relative_to(embedding_path, model_path);
    return j.dump() + "\n";
  }

  static SvmPipeline deserialize(const nlohmann::json& j, const std::filesystem::path& model_path) {
    SvmPipeline p;
    std::shared_ptr<const EmbeddingTable> table;
    if (j.contains("embedding_path")) {
      p.embedding_path = detail::resolve_from(j.at("embedding_path").get<std::string>(), model_path);
      table = std::make_shared<const EmbeddingTable>(load_embeddings(p.embedding_path));
    }
    p.featurizer = Featurizer::from_json(j.at("featurizer"), table);
    p.svm = SvmModel::from_json(j.at("svm"));
    p.svm.feature_names = p.featurizer.feature_names();
    if (p.svm.space_fingerprint != p.featurizer.fingerprint() || p.svm.dim != p.featurizer.dim())
      throw Error(ErrorCode::VocabMismatch, "model weights were trained on a different feature space");
    return p;
  }
};

struct SvmTrainOptions {
  FeatureConfig features;
  SvmConfig svm;
  std::vector<double> C_grid;  // empty: use svm.C as given
  std::size_t folds = 10;
};

struct SvmTrainResult {
  SvmPipeline pipeline;
  std::optional<CSelection> selection;
};

inline SvmTrainResult train_svm_pipeline(std::span<const ProcessedMessage> train, const SvmTrainOptions& opt,
                                         std::shared_ptr<const EmbeddingTable> table = nullptr,
                                         std::filesystem::path embedding_path = {}) {
  SvmTrainResult r;
  auto& p = r.pipeline;
  p.embedding_path = std::move(embedding_path);
  p.featurizer = Featurizer::fit(opt.features, train, std::move(table));
  const auto X = p.featurizer.transform(train);
  const auto y = labels_of(train);
  auto cfg = opt.svm;
  if (!opt.C_grid.empty()) {
    r.selection = select_C(X, y, opt.C_grid, opt.folds, cfg.seed, cfg);
    cfg.C = r.selection->best_C;
  }
  p.svm = train_svm(X, y, cfg);
  p.svm.feature_names = p.featurizer.feature_names();
  p.svm.space_fingerprint = p.featurizer.fingerprint();
  return r;
}

// ---------------------------------------------------------------------------
// Neural

struct NnPipeline {
  NeuralModel model;
  std::shared_ptr<const EmbeddingTable> table;
  std::filesystem::path embedding_path;
  bool with_desc = false;
  std::optional<DescScaler> scaler;

  std::vector<EmbeddedMessage> embed(std::span<const ProcessedMessage> pms) const {
    std::vector<EmbeddedMessage> out;
    out.reserve(pms.size());
    for (const auto& pm : pms) out.push_back(embed_matrix(pm, *table, with_desc, scaler ? &*scaler : nullptr));
    return out;
  }

  std::vector<Prediction> predict_full(std::span<const ProcessedMessage> pms) {
    const auto xs = embed(pms);
    return model.predict(xs);
  }

  std::vector<StageLabel> predict(std::span<const ProcessedMessage> pms) {
    std::vector<StageLabel> out;
    for (const auto& p : predict_full(pms)) out.push_back(p.label);
    return out;
  }

  std::string serialize(const std::filesystem::path& model_path) {
    nlohmann::json extra = {{"embedding_path", detail::relative_to(embedding_path, model_path)},
                            {"with_desc", with_desc}};
    if (scaler) extra["desc_scaler"] = {{"mean", scaler->mean}, {"sd", scaler->sd}};
    return model.serialize(extra);
  }

  static NnPipeline deserialize(std::string_view content, const std::filesystem::path& model_path) {
    NnPipeline p;
    nlohmann::json extra;
    p.model = NeuralModel::deserialize(content, &extra);
    p.embedding_path = detail::resolve_from(extra.at("embedding_path").get<std::string>(), model_path);
    p.table = std::make_shared<const EmbeddingTable>(load_embeddings(p.embedding_path));
    p.with_desc = extra.value("with_desc", false);
    if (extra.contains("desc_scaler")) {
      DescScaler s;
      s.mean = extra["desc_scaler"].at("mean").get<std::array<double, kDescDim>>();
      s.sd = extra["desc_scaler"].at("sd").get<std::array<double, kDescDim>>();
      p.scaler = s;
    }
    const std::size_t width = p.table->dim() + (p.with_desc ? kDescDim : 0);
    if (width != p.model.width())
      throw Error(ErrorCode::DimMismatch, "embedding table width differs from the model input width");
    return p;
  }
};

struct NnTrainOptions {
  ModelKind kind = ModelKind::Rnn;
  bool with_desc = false;
  bool desc_standardize = true;
  TrainConfig train;
  std::size_t hidden = 128;  // RNN
  nn::GruActivation activation = nn::GruActivation::Relu;
  bool skip_padding = true;  // RNN
  CnnArch cnn;               // width is filled in from the table
};

/// Applies a sampled search config (keys lr, batch, epochs, hidden, dense,
/// dropout) on top of base options.
inline NnTrainOptions apply_overrides(NnTrainOptions o, const nlohmann::json& c) {
  if (c.contains("lr")) o.train.lr = c["lr"].get<double>();
  if (c.contains("batch")) o.train.batch = c["batch"].get<std::size_t>();
  if (c.contains("epochs")) o.train.epochs = c["epochs"].get<std::size_t>();
  if (c.contains("hidden")) o.hidden = c["hidden"].get<std::size_t>();
  if (c.contains("dense")) o.cnn.dense = c["dense"].get<std::size_t>();
  if (c.contains("dropout")) o.cnn.dropout = c["dropout"].get<double>();
  return o;
}

struct NnTrainResult {
  NnPipeline pipeline;
  TrainHistory history;
};

inline NnTrainResult train_nn_pipeline(std::span<const ProcessedMessage> train, std::shared_ptr<const EmbeddingTable> table,
                                       std::filesystem::path embedding_path, const NnTrainOptions& opt,
                                       const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (!table || table->empty()) throw Error(ErrorCode::EmptyEmbeddingTable, "neural models need an embedding table");
  NnTrainResult r;
  auto& p = r.pipeline;
  p.table = std::move(table);
  p.embedding_path = std::move(embedding_path);
  p.with_desc = opt.with_desc;
  if (opt.with_desc && opt.desc_standardize) {
    std::vector<DescFeatures> ds;
    for (const auto& pm : train) ds.push_back(desc_features(pm.source));
    p.scaler = DescScaler::fit(ds);
  }
  const std::size_t width = p.table->dim() + (opt.with_desc ? kDescDim : 0);
  if (opt.kind == ModelKind::Cnn) {
    auto arch = opt.cnn;
    arch.width = width;
    p.model = NeuralModel::cnn(arch, opt.train.seed);
  } else {
    RnnArch arch;
    arch.input_dim = width;
    arch.hidden = opt.hidden;
    arch.activation = opt.activation;
    arch.skip_padding = opt.skip_padding;
    p.model = NeuralModel::rnn(arch, opt.train.seed);
  }
  const auto xs = p.embed(train);
  const auto ys = labels_of(train);
  r.history = train_model(p.model, xs, ys, opt.train, on_epoch);
  return r;
}

// ---------------------------------------------------------------------------
// Loading either kind

using AnyPipeline = std::variant<SvmPipeline, NnPipeline>;

inline void save_pipeline(AnyPipeline& p, const std::filesystem::path& path) {
  if (auto* s = std::get_if<SvmPipeline>(&p)) atomic_write(path, s->serialize(path));
  else atomic_write(path, std::get<NnPipeline>(p).serialize(path));
}

inline AnyPipeline load_pipeline(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
  const auto content = read_file(path);
  const auto first_line = std::string_view(content).substr(0, content.find('\n'));
  auto head = nlohmann::json::parse(first_line, nullptr, false);
  if (!head.is_discarded() && head.is_object() && head.value("format", "") == "stagegate-nn")
    return NnPipeline::deserialize(content, path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("unreadable model file: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "stagegate-svm") throw Error(ErrorCode::FormatError, "unknown model format");
  return SvmPipeline::deserialize(j, path);
}

inline std::vector<StageLabel> predict_labels(AnyPipeline& p, std::span<const ProcessedMessage> pms) {
  if (auto* s = std::get_if<SvmPipeline>(&p)) return s->predict(pms);
  return std::get<NnPipeline>(p).predict(pms);
}

}  // namespace stagegate
