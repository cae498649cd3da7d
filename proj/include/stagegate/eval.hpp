#pragma once

// Experiment runner: trains and scores every (feature set, classifier) cell
// listed in a JSON experiment file and writes table-shaped reports.
//
// Experiment file keys (relative paths resolve against `base_dir`, normally
// the directory holding the file):
//   name, train, test, output            required
//   seed (1), jobs (1)
//   embeddings.custom  {path} | {dim (100), w2v {...}}   trained on the train split
//   embeddings.generic {path} | {dim (300), w2v {...}}   stand-in when no path
//   features {min_df (2), idf ("smoothed"|"raw"), desc_standardize (true)}
//   svm {C (0.001), C_grid [], folds (10), solver, max_epochs, tol}
//   cnn / rnn {lr, batch, epochs, early_stopping, patience, optimizer,
//              hidden, activation, skip_padding, dense, dropout, batchnorm,
//              search {trials, folds, axes [{name, kind, lo, hi, choices}]}}
//   experiments [{kind, name, rows (optional subset)}]
//
// Output layout:
//   <output>/embeddings/{custom,generic}.vec
//   <output>/<experiment>/summary.txt, summary.csv
//   <output>/<experiment>/<row>/report.csv, confusion.csv, model.*, trial_log.csv
//
// Every cell's seed is derive_seed(seed, "<experiment>/<row>").

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/embeddings.hpp"
#include "stagegate/features.hpp"
#include "stagegate/metrics.hpp"
#include "stagegate/models.hpp"
#include "stagegate/pipeline.hpp"
#include "stagegate/preprocess.hpp"
#include "stagegate/svm.hpp"

namespace stagegate {

// ---------------------------------------------------------------------------
// Config parsing

inline W2vConfig w2v_config_from_json(const nlohmann::json& j, W2vConfig c = {}) {
  c.dim = j.value("dim", c.dim);
  c.window = j.value("window", c.window);
  c.negatives = j.value("negatives", c.negatives);
  c.epochs = j.value("epochs", c.epochs);
  c.min_count = j.value("min_count", c.min_count);
  c.subsample = j.value("subsample", c.subsample);
  c.lr_start = j.value("lr_start", c.lr_start);
  c.lr_end = j.value("lr_end", c.lr_end);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const W2vConfig& c) {
  return {{"dim", c.dim},           {"window", c.window},     {"negatives", c.negatives}, {"epochs", c.epochs},
          {"min_count", c.min_count}, {"subsample", c.subsample}, {"lr_start", c.lr_start}, {"lr_end", c.lr_end},
          {"seed", c.seed},         {"threads", c.threads}};
}

inline SvmSolver parse_svm_solver(std::string_view s) {
  if (s == "dual_cd") return SvmSolver::DualCD;
  if (s == "pegasos") return SvmSolver::Pegasos;
  if (s == "pegasos_full") return SvmSolver::PegasosFullBatch;
  throw Error(ErrorCode::InvalidConfig, "unknown svm solver '" + std::string(s) + "'");
}

inline std::string_view svm_solver_name(SvmSolver s) {
  switch (s) {
    case SvmSolver::DualCD: return "dual_cd";
    case SvmSolver::Pegasos: return "pegasos";
    case SvmSolver::PegasosFullBatch: return "pegasos_full";
  }
  return "";
}

inline SearchSpace search_space_from_json(const nlohmann::json& axes) {
  SearchSpace s;
  for (const auto& a : axes) {
    SearchAxis ax;
    ax.name = a.at("name").get<std::string>();
    const auto kind = a.value("kind", std::string("uniform"));
    if (kind == "uniform") ax.kind = SearchAxis::Kind::Uniform;
    else if (kind == "log_uniform") ax.kind = SearchAxis::Kind::LogUniform;
    else if (kind == "int") ax.kind = SearchAxis::Kind::Int;
    else if (kind == "choice") ax.kind = SearchAxis::Kind::Choice;
    else throw Error(ErrorCode::InvalidConfig, "unknown search axis kind '" + kind + "'");
    ax.lo = a.value("lo", 0.0);
    ax.hi = a.value("hi", 0.0);
    if (a.contains("choices")) ax.choices = a["choices"].get<std::vector<nlohmann::json>>();
    s.push_back(std::move(ax));
  }
  return s;
}

struct EmbeddingSource {
  std::filesystem::path path;  // empty: train on the train split
  W2vConfig w2v;
};

struct NnSettings {
  NnTrainOptions options;
  std::size_t search_trials = 0;  // 0 disables random search
  std::size_t search_folds = 3;
  SearchSpace space;
};

struct ExperimentEntry {
  std::string kind;
  std::string name;
  std::vector<std::string> rows;
};

struct ExperimentSpec {
  std::filesystem::path train, test, output;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  EmbeddingSource custom, generic;
  std::size_t min_df = 2;
  IdfVariant idf_variant = IdfVariant::Smoothed;
  bool desc_standardize = true;
  SvmConfig svm;
  std::vector<double> C_grid;
  std::size_t svm_folds = 10;
  NnSettings cnn, rnn;
  std::vector<ExperimentEntry> experiments;
  nlohmann::json raw;  // as read, for manifests
};

/// Rows each experiment kind produces, in table order.
inline std::vector<std::string> default_rows(std::string_view kind) {
  if (kind == "svm_bow" || kind == "svm_pos_desc" || kind == "svm_combined") return {"Bool", "Freq", "Tfidf"};
  if (kind == "svm_w2v" || kind == "cnn" || kind == "rnn") return {"GW2V", "GW2V+DESC", "CW2V", "CW2V+DESC"};
  if (kind == "svm_ablation") return {"Unigrams", "Bigrams", "2-letter POS"};
  throw Error(ErrorCode::InvalidConfig, "unknown experiment kind '" + std::string(kind) + "'");
}

namespace detail {
inline NnSettings nn_settings_from_json(const nlohmann::json& j, ModelKind kind) {
  NnSettings s;
  auto& o = s.options;
  o.kind = kind;
  if (kind == ModelKind::Rnn) {
    o.train.lr = 0.001;
    o.train.batch = 50;
  }
  o.train.lr = j.value("lr", o.train.lr);
  o.train.batch = j.value("batch", o.train.batch);
  o.train.epochs = j.value("epochs", o.train.epochs);
  o.train.early_stopping = j.value("early_stopping", o.train.early_stopping);
  o.train.patience = j.value("patience", o.train.patience);
  const auto opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") o.train.optimizer = nn::OptimizerKind::Adam;
  else if (opt == "sgd") o.train.optimizer = nn::OptimizerKind::Sgd;
  else throw Error(ErrorCode::InvalidConfig, "unknown optimizer '" + opt + "'");
  o.hidden = j.value("hidden", o.hidden);
  const auto act = j.value("activation", std::string("relu"));
  if (act == "relu") o.activation = nn::GruActivation::Relu;
  else if (act == "tanh") o.activation = nn::GruActivation::Tanh;
  else throw Error(ErrorCode::InvalidConfig, "unknown activation '" + act + "'");
  o.skip_padding = j.value("skip_padding", o.skip_padding);
  o.cnn.dense = j.value("dense", o.cnn.dense);
  o.cnn.dropout = j.value("dropout", o.cnn.dropout);
  o.cnn.batchnorm = j.value("batchnorm", o.cnn.batchnorm);
  o.train.validate();
  if (j.contains("search")) {
    const auto& sj = j["search"];
    s.search_trials = sj.value("trials", std::size_t{0});
    s.search_folds = sj.value("folds", s.search_folds);
    if (sj.contains("axes")) s.space = search_space_from_json(sj["axes"]);
    if (s.search_trials > 0 && s.space.empty()) throw Error(ErrorCode::EmptySpace, "search has trials but no axes");
  }
  return s;
}

inline EmbeddingSource embedding_source_from_json(const nlohmann::json& j, std::size_t default_dim,
                                                  const std::filesystem::path& base) {
  EmbeddingSource e;
  W2vConfig w;
  w.dim = default_dim;
  if (j.contains("path")) {
    e.path = j["path"].get<std::string>();
    if (e.path.is_relative()) e.path = base / e.path;
  }
  if (j.contains("w2v")) w = w2v_config_from_json(j["w2v"], w);
  w.dim = j.value("dim", w.dim);
  w.validate();
  e.w2v = w;
  return e;
}

inline std::string cell_dir_name(std::string_view row) {
  std::string out;
  for (char ch : row) {
    if (std::isalnum(static_cast<unsigned char>(ch))) out += ch;
    else if (ch == '+') out += "_plus_";
    else out += '_';
  }
  return out;
}
}  // namespace detail

inline ExperimentSpec experiment_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentSpec s;
  s.raw = j;
  auto path_of = [&](const char* key) {
    if (!j.contains(key)) throw Error(ErrorCode::InvalidConfig, std::string("experiment file lacks '") + key + "'");
    std::filesystem::path p = j[key].get<std::string>();
    return p.is_relative() ? base_dir / p : p;
  };
  try {
    s.train = path_of("train");
    s.test = path_of("test");
    s.output = path_of("output");
    s.seed = j.value("seed", s.seed);
    s.jobs = j.value("jobs", s.jobs);
    if (s.jobs < 1) throw Error(ErrorCode::InvalidConfig, "jobs must be >= 1");
    const auto emb = j.value("embeddings", nlohmann::json::object());
    s.custom = detail::embedding_source_from_json(emb.value("custom", nlohmann::json::object()), 100, base_dir);
    s.generic = detail::embedding_source_from_json(emb.value("generic", nlohmann::json::object()), 300, base_dir);
    const auto feat = j.value("features", nlohmann::json::object());
    s.min_df = feat.value("min_df", s.min_df);
    const auto idf = feat.value("idf", std::string("smoothed"));
    if (idf == "smoothed") s.idf_variant = IdfVariant::Smoothed;
    else if (idf == "raw") s.idf_variant = IdfVariant::Raw;
    else throw Error(ErrorCode::InvalidConfig, "unknown idf variant '" + idf + "'");
    s.desc_standardize = feat.value("desc_standardize", s.desc_standardize);
    const auto svm = j.value("svm", nlohmann::json::object());
    s.svm.C = svm.value("C", s.svm.C);
    s.svm.solver = parse_svm_solver(svm.value("solver", std::string("dual_cd")));
    s.svm.max_epochs = svm.value("max_epochs", s.svm.max_epochs);
    s.svm.tol = svm.value("tol", s.svm.tol);
    s.C_grid = svm.value("C_grid", std::vector<double>{});
    s.svm_folds = svm.value("folds", s.svm_folds);
    s.cnn = detail::nn_settings_from_json(j.value("cnn", nlohmann::json::object()), ModelKind::Cnn);
    s.rnn = detail::nn_settings_from_json(j.value("rnn", nlohmann::json::object()), ModelKind::Rnn);
    if (!j.contains("experiments") || j["experiments"].empty())
      throw Error(ErrorCode::InvalidConfig, "experiment file lists no experiments");
    std::vector<std::string> seen;
    for (const auto& e : j["experiments"]) {
      ExperimentEntry x;
      x.kind = e.at("kind").get<std::string>();
      x.name = e.value("name", x.kind);
      const auto all = default_rows(x.kind);
      if (e.contains("rows")) {
        x.rows = e["rows"].get<std::vector<std::string>>();
        for (const auto& r : x.rows) {
          if (x.kind == "svm_ablation" && r == "Synonyms")
            throw Error(ErrorCode::InvalidConfig, "the Synonyms ablation needs a thesaurus and is not supported");
          if (std::find(all.begin(), all.end(), r) == all.end())
            throw Error(ErrorCode::InvalidConfig, "row '" + r + "' is not valid for kind " + x.kind);
        }
      } else {
        x.rows = all;
      }
      if (std::find(seen.begin(), seen.end(), x.name) != seen.end())
        throw Error(ErrorCode::InvalidConfig, "duplicate experiment name '" + x.name + "'");
      seen.push_back(x.name);
      s.experiments.push_back(std::move(x));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad experiment file: ") + e.what());
  }
  return s;
}

inline ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("unreadable experiment file: ") + e.what());
  }
  return experiment_spec_from_json(j, std::filesystem::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Report tables

struct TableRow {
  std::string representation;
  EvalReport report;
};

struct ExperimentTable {
  std::string name;
  std::string kind;
  std::vector<TableRow> rows;
};

inline const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {"Representation", "F_prep", "F_resp", "F_post", "F_eng", "F_avg"};
  return cols;
}

inline std::string summary_csv(const ExperimentTable& t) {
  std::string out = join(summary_columns(), ",") + "\n";
  for (const auto& r : t.rows) {
    out += detail::csv_escape(r.representation);
    for (const auto& c : r.report.per_class) out += "," + format_fixed(c.f1, 6);
    out += "," + format_fixed(r.report.f_avg, 6) + "\n";
  }
  return out;
}

inline std::string summary_text(const ExperimentTable& t) {
  std::size_t w = summary_columns()[0].size();
  for (const auto& r : t.rows) w = std::max(w, r.representation.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  std::string out = t.name + " (" + t.kind + ")\n" + pad(summary_columns()[0], w);
  for (std::size_t c = 1; c < summary_columns().size(); ++c) out += "  " + pad(summary_columns()[c], 6);
  out += "\n";
  for (const auto& r : t.rows) {
    out += pad(r.representation, w);
    for (const auto& c : r.report.per_class) out += "  " + pad(format_fixed(c.f1, 3), 6);
    out += "  " + pad(format_fixed(r.report.f_avg, 3), 6) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentContext {
  const ExperimentSpec* spec = nullptr;
  std::vector<ProcessedMessage> train, test;
  std::shared_ptr<const EmbeddingTable> custom, generic;
  std::filesystem::path custom_path, generic_path;
};

namespace detail {

inline bool row_uses_generic(const std::string& row) { return row.rfind("GW2V", 0) == 0; }
inline bool row_uses_custom(const std::string& row) { return row.rfind("CW2V", 0) == 0; }
inline bool row_has_desc(const std::string& row) { return row.size() > 5 && row.substr(row.size() - 5) == "+DESC"; }

inline void prepare_embeddings(ExperimentContext& ctx, const std::function<void(const std::string&)>& log) {
  const auto& spec = *ctx.spec;
  bool need_custom = false, need_generic = false;
  for (const auto& e : spec.experiments) {
    for (const auto& r : e.rows) {
      need_custom = need_custom || row_uses_custom(r);
      need_generic = need_generic || row_uses_generic(r);
    }
  }
  auto obtain = [&](const EmbeddingSource& src, const char* tag, std::shared_ptr<const EmbeddingTable>& table,
                    std::filesystem::path& path) {
    if (!src.path.empty()) {
      path = src.path;
      table = std::make_shared<const EmbeddingTable>(load_embeddings(path));
      if (log) log(std::string("loaded ") + tag + " embeddings from " + path.string());
      return;
    }
    auto cfg = src.w2v;
    cfg.seed = derive_seed(spec.seed, std::string("embeddings/") + tag);
    if (log) log(std::string("training ") + tag + " embeddings (dim " + std::to_string(cfg.dim) + ")");
    table = std::make_shared<const EmbeddingTable>(train_word2vec(embedding_sentences(ctx.train), cfg));
    path = spec.output / "embeddings" / (std::string(tag) + ".vec");
    save_embeddings(*table, path);
  };
  if (need_custom) obtain(spec.custom, "custom", ctx.custom, ctx.custom_path);
  if (need_generic) obtain(spec.generic, "generic", ctx.generic, ctx.generic_path);
}

inline FeatureConfig svm_feature_config(const ExperimentSpec& spec, const std::string& kind, const std::string& row) {
  FeatureConfig f;
  f.min_df = spec.min_df;
  f.idf_variant = spec.idf_variant;
  f.desc_standardize = spec.desc_standardize;
  if (kind == "svm_bow") {
    f.bow_mode = parse_bow_mode(row);
  } else if (kind == "svm_pos_desc") {
    f.bow = false;
    f.pos = f.desc = true;
    f.pos_mode = parse_bow_mode(row);
  } else if (kind == "svm_combined") {
    f.pos = f.desc = true;
    f.bow_mode = f.pos_mode = parse_bow_mode(row);
  } else if (kind == "svm_ablation") {
    f.pos = f.desc = true;
    f.bow_mode = f.pos_mode = BowMode::Tfidf;
    if (row == "Unigrams") f.orders = {1};
    else if (row == "Bigrams") f.orders = {1, 2};
    else if (row == "2-letter POS") f.pos_two_letter = true;
  } else if (kind == "svm_w2v") {
    f.bow = false;
    f.embedding = true;
    f.embedding_name = row_uses_generic(row) ? "generic" : "custom";
    f.desc = row_has_desc(row);
  }
  return f;
}

struct CellOutput {
  EvalReport report;
};

inline void write_report_files(const std::filesystem::path& dir, const EvalReport& r) {
  atomic_write(dir / "report.csv", report_csv(r));
  atomic_write(dir / "confusion.csv", confusion_csv(r.cm));
}

inline EvalReport run_svm_cell(const ExperimentContext& ctx, const ExperimentEntry& e, const std::string& row,
                               std::uint64_t seed, const std::filesystem::path& dir) {
  const auto& spec = *ctx.spec;
  SvmTrainOptions opt;
  opt.features = svm_feature_config(spec, e.kind, row);
  opt.svm = spec.svm;
  opt.svm.seed = seed;
  opt.C_grid = spec.C_grid;
  opt.folds = spec.svm_folds;
  std::shared_ptr<const EmbeddingTable> table;
  std::filesystem::path table_path;
  if (opt.features.embedding) {
    const bool generic = row_uses_generic(row);
    table = generic ? ctx.generic : ctx.custom;
    table_path = generic ? ctx.generic_path : ctx.custom_path;
  }
  auto res = train_svm_pipeline(ctx.train, opt, table, table_path);
  const auto preds = res.pipeline.predict(ctx.test);
  const auto report = evaluate(preds, labels_of(ctx.test));
  write_report_files(dir, report);
  atomic_write(dir / "model.svm.json", res.pipeline.serialize(dir / "model.svm.json"));
  if (res.selection) {
    std::string log = "trial,C,score\n";
    for (std::size_t i = 0; i < res.selection->scores.size(); ++i) {
      char c[32];
      std::snprintf(c, sizeof c, "%.6g", res.selection->scores[i].first);
      log += std::to_string(i) + "," + c + "," +
             format_fixed(res.selection->scores[i].second, 6) + "\n";
    }
    atomic_write(dir / "trial_log.csv", log);
  }
  return report;
}

inline EvalReport run_nn_cell(const ExperimentContext& ctx, const ExperimentEntry& e, const std::string& row,
                              std::uint64_t seed, const std::filesystem::path& dir) {
  const auto& spec = *ctx.spec;
  const auto& settings = e.kind == "cnn" ? spec.cnn : spec.rnn;
  const bool generic = row_uses_generic(row);
  const auto table = generic ? ctx.generic : ctx.custom;
  const auto table_path = generic ? ctx.generic_path : ctx.custom_path;
  NnTrainOptions opt = settings.options;
  opt.with_desc = row_has_desc(row);
  opt.desc_standardize = spec.desc_standardize;
  opt.train.seed = seed;

  if (settings.search_trials > 0) {
    const auto train_labels = labels_of(ctx.train);
    std::vector<std::size_t> strata;
    for (auto l : train_labels) strata.push_back(label_index(l));
    const auto folds = kfold(ctx.train.size(), settings.search_folds, derive_seed(seed, "search-folds"), strata);
    auto objective = [&](const nlohmann::json& c) {
      const auto o = apply_overrides(opt, c);
      double total = 0;
      for (const auto& f : folds) {
        std::vector<ProcessedMessage> tr, va;
        for (auto i : f.train) tr.push_back(ctx.train[i]);
        for (auto i : f.validation) va.push_back(ctx.train[i]);
        auto r = train_nn_pipeline(tr, table, table_path, o);
        total += evaluate(r.pipeline.predict(va), labels_of(va)).f_avg;
      }
      return total / static_cast<double>(folds.size());
    };
    const auto sr = random_search(settings.space, settings.search_trials, seed, objective);
    atomic_write(dir / "trial_log.csv", trial_log_csv(sr));
    opt = apply_overrides(opt, sr.best);
  }

  auto res = train_nn_pipeline(ctx.train, table, table_path, opt);
  const auto preds = res.pipeline.predict(ctx.test);
  const auto report = evaluate(preds, labels_of(ctx.test));
  write_report_files(dir, report);
  std::string loss = "epoch,loss\n";
  for (std::size_t i = 0; i < res.history.epoch_loss.size(); ++i)
    loss += std::to_string(i + 1) + "," + format_fixed(res.history.epoch_loss[i], 6) + "\n";
  atomic_write(dir / "loss.csv", loss);
  atomic_write(dir / "model.nn", res.pipeline.serialize(dir / "model.nn"));
  return report;
}

}  // namespace detail

struct ExperimentResult {
  std::vector<ExperimentTable> tables;
  std::filesystem::path custom_embeddings, generic_embeddings;
};

/// Preprocesses both splits once, obtains embeddings, runs every cell (up to
/// `jobs` at a time) and writes the reports. Summaries are rewritten after
/// each finished cell, so a failure leaves the completed rows on disk; the
/// first failure is rethrown once running cells finish.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const Preprocessor& prep,
                                       const std::function<void(const std::string&)>& log = {}) {
  ExperimentContext ctx;
  ctx.spec = &spec;
  {
    const auto train = load_corpus(spec.train);
    const auto test = load_corpus(spec.test);
    require_labeled(train);
    require_labeled(test);
    if (log) log("preprocessing " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) +
                 " test messages");
    ctx.train = prep.process(train);
    ctx.test = prep.process(test);
  }
  std::filesystem::create_directories(spec.output);
  detail::prepare_embeddings(ctx, log);

  struct Cell {
    std::size_t table, row;
  };
  std::vector<Cell> cells;
  ExperimentResult result;
  result.custom_embeddings = ctx.custom_path;
  result.generic_embeddings = ctx.generic_path;
  std::vector<std::vector<std::optional<EvalReport>>> done;
  for (std::size_t t = 0; t < spec.experiments.size(); ++t) {
    const auto& e = spec.experiments[t];
    result.tables.push_back({e.name, e.kind, {}});
    done.emplace_back(e.rows.size());
    for (std::size_t r = 0; r < e.rows.size(); ++r) cells.push_back({t, r});
  }

  std::mutex mu;
  std::exception_ptr first_error;
  auto flush_table = [&](std::size_t t) {
    ExperimentTable tab{spec.experiments[t].name, spec.experiments[t].kind, {}};
    for (std::size_t r = 0; r < done[t].size(); ++r)
      if (done[t][r]) tab.rows.push_back({spec.experiments[t].rows[r], *done[t][r]});
    const auto dir = spec.output / tab.name;
    atomic_write(dir / "summary.csv", summary_csv(tab));
    atomic_write(dir / "summary.txt", summary_text(tab));
  };
  auto run_cell = [&](const Cell& c) {
    const auto& e = spec.experiments[c.table];
    const auto& row = e.rows[c.row];
    const auto dir = spec.output / e.name / detail::cell_dir_name(row);
    std::filesystem::create_directories(dir);
    const auto seed = derive_seed(spec.seed, e.name + "/" + row);
    if (log) {
      std::lock_guard lk(mu);
      log("running " + e.name + " / " + row);
    }
    const auto report = e.kind == "cnn" || e.kind == "rnn" ? detail::run_nn_cell(ctx, e, row, seed, dir)
                                                           : detail::run_svm_cell(ctx, e, row, seed, dir);
    std::lock_guard lk(mu);
    done[c.table][c.row] = report;
    flush_table(c.table);
    if (log) log(e.name + " / " + row + ": F_avg " + format_fixed(report.f_avg, 3));
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      {
        std::lock_guard lk(mu);
        if (first_error) return;
      }
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        run_cell(cells[i]);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::min(spec.jobs, std::max<std::size_t>(cells.size(), 1));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t t = 0; t < done.size(); ++t) {
    for (std::size_t r = 0; r < done[t].size(); ++r)
      if (done[t][r]) result.tables[t].rows.push_back({spec.experiments[t].rows[r], *done[t][r]});
  }
  if (first_error) std::rethrow_exception(first_error);
  return result;
}

}  // namespace stagegate
