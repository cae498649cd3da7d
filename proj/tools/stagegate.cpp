// stagegate: command-line front end.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 internal invariant violation. Every subcommand writes a run manifest
// (JSON) to --manifest, or next to its main output as <output>.manifest.json;
// commands without an output file anchor it on their main input instead.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/embeddings.hpp"
#include "stagegate/eval.hpp"
#include "stagegate/features.hpp"
#include "stagegate/metrics.hpp"
#include "stagegate/pipeline.hpp"
#include "stagegate/preprocess.hpp"
#include "stagegate/synth.hpp"
#include "stagegate/tagger.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stagegate;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInvariant = 4;

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::EmptySpace: return kExitUsage;
    case ErrorCode::InvariantViolation: return kExitInvariant;
    default: return kExitData;
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& p) { return "fnv1a64:" + hex64(fnv1a(read_file(p))); }

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) : start_(std::chrono::system_clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = std::vector<std::string>(argv, argv + argc);
    j_["started_at"] = detail::now_iso8601();
    j_["config"] = json::object();
    j_["seeds"] = json::object();
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }

  json& config() { return j_["config"]; }
  void set(const std::string& key, json v) { j_[key] = std::move(v); }
  void seed(const std::string& name, std::uint64_t v) { j_["seeds"][name] = v; }
  void anchor(const fs::path& p, bool is_output) {
    if (!anchor_ || (is_output && !anchor_is_output_)) {
      anchor_ = p;
      anchor_is_output_ = is_output;
    }
  }
  void input(const fs::path& p) {
    anchor(p, false);
    inputs_.push_back(p);
  }
  void output(const fs::path& p) {
    anchor(p, true);
    outputs_.push_back(p);
  }
  void output_dir(const fs::path& dir) { dirs_.push_back(dir); }
  void set_path(const fs::path& p) { explicit_path_ = p; }

  void write(int exit_code, const std::string& error) {
    fs::path path;
    if (explicit_path_) path = *explicit_path_;
    else if (anchor_is_output_) path = anchor_->string() + ".manifest.json";
    else if (anchor_) path = anchor_->string() + "." + j_["command"].get<std::string>() + ".manifest.json";
    else return;
    auto list = [&](const std::vector<fs::path>& ps) {
      json a = json::array();
      for (const auto& p : ps) {
        json e = {{"path", p.string()}};
        if (fs::is_regular_file(p)) e["hash"] = file_hash(p);
        a.push_back(e);
      }
      return a;
    };
    j_["inputs"] = list(inputs_);
    std::vector<fs::path> outs = outputs_;
    for (const auto& d : dirs_) {
      if (!fs::exists(d)) continue;
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(d))
        if (e.is_regular_file() && e.path() != path) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      outs.insert(outs.end(), files.begin(), files.end());
    }
    j_["outputs"] = list(outs);
    j_["finished_at"] = detail::now_iso8601();
    j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::system_clock::now() - start_).count();
    j_["exit_code"] = exit_code;
    j_["status"] = exit_code == 0 ? "ok" : "error";
    if (!error.empty()) j_["error"] = error;
    try {
      atomic_write(path, j_.dump(2) + "\n");
    } catch (const std::exception& e) {
      std::cerr << "warning: could not write manifest " << path << ": " << e.what() << "\n";
    }
  }

 private:
  json j_;
  std::chrono::system_clock::time_point start_;
  std::optional<fs::path> anchor_, explicit_path_;
  bool anchor_is_output_ = false;
  std::vector<fs::path> inputs_, outputs_, dirs_;
};

Preprocessor make_preprocessor(const std::string& tagger_path, Manifest& m) {
  fs::path p = tagger_path.empty() ? PerceptronTagger::bundled_model_path() : fs::path(tagger_path);
  m.set("tagger", p.string());
  return Preprocessor(std::make_shared<const PerceptronTagger>(PerceptronTagger::load(p)));
}

std::vector<int> parse_orders(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad n-gram order '" + part + "'");
    }
  }
  validate_orders(out);
  return out;
}

StageLabel parse_class(const std::string& s) {
  if (auto l = parse_label(s)) return *l;
  for (auto l : kAllLabels)
    if (s == label_short(l)) return l;
  throw Error(ErrorCode::InvalidConfig, "unknown class '" + s + "'");
}

void write_or_print(const std::string& out, const std::string& content, Manifest& m) {
  if (out.empty()) {
    std::cout << content;
  } else {
    atomic_write(out, content);
    m.output(out);
  }
}

// Shared feature flags for featurize and train --classifier svm.
struct FeatureFlags {
  bool no_bow = false;
  std::string orders = "1,2,3";
  std::size_t min_df = 2;
  std::string bow_mode = "tfidf";
  std::string idf = "smoothed";
  bool pos = false, pos_two = false;
  std::string pos_mode = "freq";
  bool desc = false, desc_standardize = false;
  std::string embeddings;  // mean-pooled vectors when set

  void attach(CLI::App* c) {
    c->add_flag("--no-bow", no_bow, "Drop the n-gram bag-of-words part");
    c->add_option("--orders", orders, "Comma-separated n-gram orders")->capture_default_str();
    c->add_option("--min-df", min_df, "Minimum document frequency")->capture_default_str();
    c->add_option("--bow-mode", bow_mode, "bool | freq | tfidf")->capture_default_str();
    c->add_option("--idf", idf, "smoothed | raw")->capture_default_str();
    c->add_flag("--pos", pos, "Add part-of-speech counts");
    c->add_flag("--pos-two-letter", pos_two, "Collapse POS tags to two-letter prefixes");
    c->add_option("--pos-mode", pos_mode, "bool | freq | tfidf")->capture_default_str();
    c->add_flag("--desc", desc, "Add the five descriptive features");
    c->add_flag("--desc-standardize", desc_standardize, "Standardize descriptive features on the train split");
    c->add_option("--embeddings", embeddings, "Embedding table for mean-pooled word vectors");
  }

  FeatureConfig config() const {
    FeatureConfig f;
    f.bow = !no_bow;
    f.orders = parse_orders(orders);
    f.min_df = min_df;
    f.bow_mode = parse_bow_mode(bow_mode);
    if (idf == "smoothed") f.idf_variant = IdfVariant::Smoothed;
    else if (idf == "raw") f.idf_variant = IdfVariant::Raw;
    else throw Error(ErrorCode::InvalidConfig, "unknown idf variant '" + idf + "'");
    f.pos = pos || pos_two;
    f.pos_two_letter = pos_two;
    f.pos_mode = parse_bow_mode(pos_mode);
    f.desc = desc;
    f.desc_standardize = desc_standardize;
    f.embedding = !embeddings.empty();
    f.embedding_name = embeddings.empty() ? "" : fs::path(embeddings).stem().string();
    f.validate();
    return f;
  }

  std::shared_ptr<const EmbeddingTable> table(Manifest& m) const {
    if (embeddings.empty()) return nullptr;
    m.input(embeddings);
    return std::make_shared<const EmbeddingTable>(load_embeddings(embeddings));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emergency-stage message classifier"};
  app.require_subcommand(1);
  std::string manifest_path, tagger_path;
  app.add_option("--manifest", manifest_path, "Run manifest path (default: next to the main output)");
  app.add_option("--tagger", tagger_path, "POS tagger model (default: bundled)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and write it as JSONL, optionally split");
  std::string in_input, in_format, in_output, in_train, in_test;
  double in_fraction = 0.7;
  std::uint64_t in_seed = 1;
  bool in_unstratified = false;
  ingest->add_option("--input", in_input, "Corpus file (.jsonl or .csv)")->required();
  ingest->add_option("--format", in_format, "jsonl | csv (default: from extension)");
  ingest->add_option("--output", in_output, "Canonical JSONL output");
  ingest->add_option("--train-out", in_train, "Train split output");
  ingest->add_option("--test-out", in_test, "Test split output");
  ingest->add_option("--train-fraction", in_fraction, "Train share for the split")->capture_default_str();
  ingest->add_option("--seed", in_seed, "Split seed")->capture_default_str();
  ingest->add_flag("--unstratified", in_unstratified, "Split without preserving class proportions");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Descriptive statistics of a corpus");
  std::string st_input, st_out;
  stats_cmd->add_option("--input", st_input, "Corpus file")->required();
  stats_cmd->add_option("--out", st_out, "Write the table here instead of stdout");

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "Normalize, tokenize, tag and lemmatize");
  std::string pp_input, pp_output;
  prep_cmd->add_option("--input", pp_input, "Corpus file")->required();
  prep_cmd->add_option("--output", pp_output, "Processed JSONL output")->required();

  // train-embeddings
  auto* emb_cmd = app.add_subcommand("train-embeddings", "Train skip-gram embeddings on message text");
  std::vector<std::string> te_inputs;
  std::string te_output, te_neighbors;
  std::size_t te_top = 10;
  W2vConfig te_cfg;
  emb_cmd->add_option("--input", te_inputs, "Corpus files (labels not needed)")->required();
  emb_cmd->add_option("--output", te_output, "Table output (.vec text, .bin binary)")->required();
  emb_cmd->add_option("--dim", te_cfg.dim)->capture_default_str();
  emb_cmd->add_option("--window", te_cfg.window)->capture_default_str();
  emb_cmd->add_option("--negatives", te_cfg.negatives)->capture_default_str();
  emb_cmd->add_option("--epochs", te_cfg.epochs)->capture_default_str();
  emb_cmd->add_option("--min-count", te_cfg.min_count)->capture_default_str();
  emb_cmd->add_option("--subsample", te_cfg.subsample)->capture_default_str();
  emb_cmd->add_option("--lr", te_cfg.lr_start)->capture_default_str();
  emb_cmd->add_option("--seed", te_cfg.seed)->capture_default_str();
  emb_cmd->add_option("--threads", te_cfg.threads, "More than 1 is not deterministic")->capture_default_str();
  emb_cmd->add_option("--neighbors", te_neighbors, "Print nearest words to this word after training");
  emb_cmd->add_option("--top", te_top, "Neighbor count")->capture_default_str();

  // featurize
  auto* feat_cmd = app.add_subcommand("featurize", "Fit features on a train split and dump vectors");
  std::string fz_train, fz_input, fz_output, fz_names;
  FeatureFlags fz_flags;
  feat_cmd->add_option("--train", fz_train, "Corpus the featurizer is fitted on")->required();
  feat_cmd->add_option("--input", fz_input, "Corpus to transform (default: the train corpus)");
  feat_cmd->add_option("--output", fz_output, "Sparse dump output")->required();
  feat_cmd->add_option("--names", fz_names, "Write feature names, one per line");
  fz_flags.attach(feat_cmd);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a classifier");
  std::string tr_train, tr_output, tr_classifier = "svm", tr_grid;
  FeatureFlags tr_flags;
  SvmConfig tr_svm;
  std::size_t tr_folds = 10;
  std::string tr_solver = "dual_cd";
  bool tr_with_desc = false, tr_desc_raw = false;
  NnTrainOptions tr_nn;
  std::string tr_activation = "relu";
  std::uint64_t tr_seed = 1;
  train_cmd->add_option("--train", tr_train, "Labeled training corpus")->required();
  train_cmd->add_option("--output", tr_output, "Model file")->required();
  train_cmd->add_option("--classifier", tr_classifier, "svm | cnn | rnn")->capture_default_str();
  train_cmd->add_option("--seed", tr_seed)->capture_default_str();
  tr_flags.attach(train_cmd);
  train_cmd->add_option("--C", tr_svm.C, "SVM regularization trade-off")->capture_default_str();
  train_cmd->add_option("--C-grid", tr_grid, "Comma-separated C values chosen by cross-validation");
  train_cmd->add_option("--folds", tr_folds, "Cross-validation folds for --C-grid")->capture_default_str();
  train_cmd->add_option("--solver", tr_solver, "dual_cd | pegasos | pegasos_full")->capture_default_str();
  train_cmd->add_option("--max-epochs", tr_svm.max_epochs)->capture_default_str();
  train_cmd->add_flag("--with-desc", tr_with_desc, "Neural: append descriptive features to each word row");
  train_cmd->add_flag("--desc-raw", tr_desc_raw, "Neural: do not standardize descriptive features");
  train_cmd->add_option("--epochs", tr_nn.train.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tr_nn.train.lr)->capture_default_str();
  train_cmd->add_option("--batch", tr_nn.train.batch)->capture_default_str();
  train_cmd->add_option("--hidden", tr_nn.hidden, "RNN hidden units")->capture_default_str();
  train_cmd->add_option("--activation", tr_activation, "RNN candidate activation: relu | tanh")->capture_default_str();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model on a labeled corpus");
  std::string ev_model, ev_test, ev_out, ev_confusion;
  eval_cmd->add_option("--model", ev_model)->required();
  eval_cmd->add_option("--test", ev_test, "Labeled corpus")->required();
  eval_cmd->add_option("--out", ev_out, "Report CSV output (default: stdout table)");
  eval_cmd->add_option("--confusion", ev_confusion, "Confusion matrix CSV output");

  // predict
  auto* pred_cmd = app.add_subcommand("predict", "Label messages with a model");
  std::string pr_model, pr_input, pr_output;
  pred_cmd->add_option("--model", pr_model)->required();
  pred_cmd->add_option("--input", pr_input, "Corpus file")->required();
  pred_cmd->add_option("--output", pr_output, "JSONL predictions (default: stdout)");

  // explain
  auto* expl_cmd = app.add_subcommand("explain", "Largest positive SVM weights of a class");
  std::string ex_model, ex_class, ex_out;
  std::size_t ex_top = 10;
  expl_cmd->add_option("--model", ex_model)->required();
  expl_cmd->add_option("--class", ex_class, "preparedness | response | post_emergency | engagement")->required();
  expl_cmd->add_option("--top", ex_top)->capture_default_str();
  expl_cmd->add_option("--out", ex_out, "Output file (default: stdout)");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run the table experiments listed in a JSON file");
  std::string xp_config, xp_output;
  std::optional<std::uint64_t> xp_seed;
  std::optional<std::size_t> xp_jobs;
  exp_cmd->add_option("--config", xp_config, "Experiment file")->required();
  exp_cmd->add_option("--output", xp_output, "Override the output directory");
  exp_cmd->add_option("--seed", xp_seed, "Override the master seed");
  exp_cmd->add_option("--jobs", xp_jobs, "Cells run concurrently (1 = reproducible order)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic corpus pair");
  std::size_t sy_classes = 4, sy_train = 2000, sy_test = 500;
  std::uint64_t sy_seed = 7;
  double sy_noise = 0.0;
  std::string sy_dir;
  synth_cmd->add_option("--classes", sy_classes, "Must be 4")->capture_default_str();
  synth_cmd->add_option("--train", sy_train)->capture_default_str();
  synth_cmd->add_option("--test", sy_test)->capture_default_str();
  synth_cmd->add_option("--seed", sy_seed)->capture_default_str();
  synth_cmd->add_option("--noise", sy_noise, "Label noise rate")->capture_default_str();
  synth_cmd->add_option("--out-dir", sy_dir, "Writes train.jsonl and test.jsonl here")->required();

  // train-tagger
  auto* tag_cmd = app.add_subcommand("train-tagger", "Train the perceptron POS tagger");
  std::string tt_corpus, tt_output;
  PerceptronTagger::TrainOptions tt_opt;
  tag_cmd->add_option("--corpus", tt_corpus, "word/TAG sentences, one per line")->required();
  tag_cmd->add_option("--output", tt_output, "Model output")->required();
  tag_cmd->add_option("--iterations", tt_opt.iterations)->capture_default_str();
  tag_cmd->add_option("--seed", tt_opt.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Manifest man(sub->get_name(), argc, argv);
  if (!manifest_path.empty()) man.set_path(manifest_path);
  int rc = 0;
  std::string err;

  try {
    if (sub == ingest) {
      man.input(in_input);
      if (in_output.empty() && in_train.empty() && in_test.empty())
        throw Error(ErrorCode::InvalidConfig, "ingest needs --output or --train-out/--test-out");
      if (in_train.empty() != in_test.empty())
        throw Error(ErrorCode::InvalidConfig, "--train-out and --test-out go together");
      man.config() = {{"format", in_format}, {"train_fraction", in_fraction}, {"stratified", !in_unstratified}};
      Dataset d = in_format.empty() ? load_corpus(in_input)
                  : in_format == "jsonl" ? load_corpus(in_input, CorpusFormat::Jsonl)
                  : in_format == "csv" ? load_corpus(in_input, CorpusFormat::Csv)
                  : throw Error(ErrorCode::InvalidConfig, "unknown format '" + in_format + "'");
      if (!in_output.empty()) {
        atomic_write(in_output, to_jsonl(d));
        man.output(in_output);
      }
      if (!in_train.empty()) {
        man.seed("split", in_seed);
        auto [tr, te] = split(d, in_fraction, in_seed, !in_unstratified);
        atomic_write(in_train, to_jsonl(tr));
        atomic_write(in_test, to_jsonl(te));
        man.output(in_train);
        man.output(in_test);
        std::cerr << "train " << tr.size() << ", test " << te.size() << "\n";
      }
      std::cerr << "ingested " << d.size() << " messages\n";
    } else if (sub == stats_cmd) {
      man.input(st_input);
      const auto d = load_corpus(st_input);
      write_or_print(st_out, format_stats(stats(d)), man);
    } else if (sub == prep_cmd) {
      man.input(pp_input);
      const auto d = load_corpus(pp_input);
      const auto prep = make_preprocessor(tagger_path, man);
      std::string out;
      for (const auto& m : d) out += processed_to_json(prep.process(m)).dump() + "\n";
      atomic_write(pp_output, out);
      man.output(pp_output);
    } else if (sub == emb_cmd) {
      te_cfg.lr_end = te_cfg.lr_start * 1e-4;
      te_cfg.validate();
      man.config() = to_json(te_cfg);
      man.seed("word2vec", te_cfg.seed);
      std::vector<std::vector<std::string>> sentences;
      for (const auto& in : te_inputs) {
        man.input(in);
        auto s = embedding_sentences(load_corpus(in));
        sentences.insert(sentences.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
      }
      const auto table = train_word2vec(sentences, te_cfg);
      save_embeddings(table, te_output);
      man.output(te_output);
      std::cerr << "vocabulary " << table.size() << ", dim " << table.dim() << "\n";
      if (!te_neighbors.empty()) {
        for (const auto& [w, c] : nearest(table, te_neighbors, te_top)) std::cout << w << "\t" << format_fixed(c, 4) << "\n";
      }
    } else if (sub == feat_cmd) {
      man.input(fz_train);
      const auto cfg = fz_flags.config();
      man.config() = to_json(cfg);
      const auto prep = make_preprocessor(tagger_path, man);
      const auto train = prep.process(load_corpus(fz_train));
      const auto f = Featurizer::fit(cfg, train, fz_flags.table(man));
      std::vector<ProcessedMessage> target;
      if (fz_input.empty()) {
        target = train;
      } else {
        man.input(fz_input);
        target = prep.process(load_corpus(fz_input));
      }
      atomic_write(fz_output, dump_features(f.transform(target)));
      man.output(fz_output);
      if (!fz_names.empty()) {
        atomic_write(fz_names, join(f.feature_names(), "\n") + "\n");
        man.output(fz_names);
      }
      std::cerr << target.size() << " rows, " << f.dim() << " features\n";
    } else if (sub == train_cmd) {
      man.input(tr_train);
      man.seed("master", tr_seed);
      const auto prep = make_preprocessor(tagger_path, man);
      const auto d = load_corpus(tr_train);
      require_labeled(d);
      const auto train = prep.process(d);
      AnyPipeline pipeline;
      if (tr_classifier == "svm") {
        SvmTrainOptions opt;
        opt.features = tr_flags.config();
        opt.svm = tr_svm;
        opt.svm.solver = parse_svm_solver(tr_solver);
        opt.svm.seed = tr_seed;
        opt.folds = tr_folds;
        if (!tr_grid.empty()) {
          for (const auto& c : split(tr_grid, ',')) {
            try {
              opt.C_grid.push_back(std::stod(c));
            } catch (const std::exception&) {
              throw Error(ErrorCode::InvalidConfig, "bad C value '" + c + "'");
            }
          }
        }
        man.config() = {{"classifier", "svm"}, {"features", to_json(opt.features)}, {"C", opt.svm.C},
                        {"C_grid", opt.C_grid}, {"folds", opt.folds}, {"solver", tr_solver},
                        {"max_epochs", opt.svm.max_epochs}, {"tol", opt.svm.tol}};
        auto res = train_svm_pipeline(train, opt, tr_flags.table(man), tr_flags.embeddings);
        if (res.selection) {
          man.config()["selected_C"] = res.selection->best_C;
          for (const auto& [c, s] : res.selection->scores) std::cerr << "C=" << c << " cv F_avg " << format_fixed(s, 4) << "\n";
        }
        pipeline = std::move(res.pipeline);
      } else if (tr_classifier == "cnn" || tr_classifier == "rnn") {
        if (tr_flags.embeddings.empty()) throw Error(ErrorCode::InvalidConfig, "neural models need --embeddings");
        tr_nn.kind = tr_classifier == "cnn" ? ModelKind::Cnn : ModelKind::Rnn;
        tr_nn.with_desc = tr_with_desc;
        tr_nn.desc_standardize = !tr_desc_raw;
        if (tr_activation == "relu") tr_nn.activation = nn::GruActivation::Relu;
        else if (tr_activation == "tanh") tr_nn.activation = nn::GruActivation::Tanh;
        else throw Error(ErrorCode::InvalidConfig, "unknown activation '" + tr_activation + "'");
        tr_nn.train.seed = tr_seed;
        tr_nn.train.validate();
        man.config() = {{"classifier", tr_classifier}, {"with_desc", tr_with_desc},
                        {"desc_standardize", !tr_desc_raw}, {"epochs", tr_nn.train.epochs},
                        {"lr", tr_nn.train.lr}, {"batch", tr_nn.train.batch}, {"hidden", tr_nn.hidden},
                        {"activation", tr_activation}};
        auto table = tr_flags.table(man);
        auto res = train_nn_pipeline(train, table, tr_flags.embeddings, tr_nn, [](std::size_t e, double loss) {
          std::cerr << "epoch " << e + 1 << " loss " << format_fixed(loss, 6) << "\n";
        });
        pipeline = std::move(res.pipeline);
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown classifier '" + tr_classifier + "'");
      }
      save_pipeline(pipeline, tr_output);
      man.output(tr_output);
    } else if (sub == eval_cmd) {
      man.input(ev_model);
      man.input(ev_test);
      auto pipeline = load_pipeline(ev_model);
      const auto prep = make_preprocessor(tagger_path, man);
      const auto d = load_corpus(ev_test);
      require_labeled(d);
      const auto pms = prep.process(d);
      const auto report = evaluate(predict_labels(pipeline, pms), labels_of(pms));
      if (ev_out.empty()) {
        ExperimentTable t{fs::path(ev_model).filename().string(), "evaluate", {{"model", report}}};
        std::cout << summary_text(t);
        std::cout << "micro F1 " << format_fixed(report.micro_f1, 3) << "\n";
      } else {
        atomic_write(ev_out, report_csv(report));
        man.output(ev_out);
      }
      if (!ev_confusion.empty()) {
        atomic_write(ev_confusion, confusion_csv(report.cm));
        man.output(ev_confusion);
      }
    } else if (sub == pred_cmd) {
      man.input(pr_model);
      man.input(pr_input);
      auto pipeline = load_pipeline(pr_model);
      const auto prep = make_preprocessor(tagger_path, man);
      const auto pms = prep.process(load_corpus(pr_input));
      std::string out;
      if (auto* nnp = std::get_if<NnPipeline>(&pipeline)) {
        const auto preds = nnp->predict_full(pms);
        for (std::size_t i = 0; i < pms.size(); ++i) {
          json j = {{"id", pms[i].source.id}, {"label", std::string(label_name(preds[i].label))}};
          for (auto l : kAllLabels) j["probs"][std::string(label_name(l))] = preds[i].probs[label_index(l)];
          out += j.dump() + "\n";
        }
      } else {
        const auto& svm = std::get<SvmPipeline>(pipeline);
        for (const auto& pm : pms) {
          const auto x = svm.featurizer.transform(pm);
          const auto dv = svm.svm.decision_values(x);
          json j = {{"id", pm.source.id}, {"label", std::string(label_name(svm.svm.predict(x)))}};
          for (auto l : kAllLabels) j["scores"][std::string(label_name(l))] = dv[label_index(l)];
          out += j.dump() + "\n";
        }
      }
      write_or_print(pr_output, out, man);
    } else if (sub == expl_cmd) {
      man.input(ex_model);
      const auto cls = parse_class(ex_class);
      auto pipeline = load_pipeline(ex_model);
      const auto* svm = std::get_if<SvmPipeline>(&pipeline);
      if (!svm) throw Error(ErrorCode::InvalidConfig, "explain needs an SVM model");
      man.config() = {{"class", std::string(label_name(cls))}, {"top", ex_top}};
      std::string out;
      for (const auto& [name, w] : top_features(svm->svm, cls, ex_top)) out += name + "\t" + format_fixed(w, 6) + "\n";
      write_or_print(ex_out, out, man);
    } else if (sub == exp_cmd) {
      man.input(xp_config);
      auto spec = load_experiment_spec(xp_config);
      if (!xp_output.empty()) spec.output = xp_output;
      if (xp_seed) spec.seed = *xp_seed;
      if (xp_jobs) spec.jobs = *xp_jobs;
      man.config() = spec.raw;
      man.config()["output"] = spec.output.string();
      man.config()["seed"] = spec.seed;
      man.config()["jobs"] = spec.jobs;
      man.seed("master", spec.seed);
      for (const auto& e : spec.experiments)
        for (const auto& r : e.rows) man.seed(e.name + "/" + r, derive_seed(spec.seed, e.name + "/" + r));
      man.input(spec.train);
      man.input(spec.test);
      if (manifest_path.empty()) man.set_path(spec.output / "manifest.json");
      man.output_dir(spec.output);
      const auto prep = make_preprocessor(tagger_path, man);
      const auto result = run_experiment(spec, prep, [](const std::string& s) { std::cerr << s << "\n"; });
      for (const auto& t : result.tables) std::cout << summary_text(t) << "\n";
    } else if (sub == synth_cmd) {
      if (manifest_path.empty()) man.set_path(fs::path(sy_dir) / "synth.manifest.json");
      if (sy_classes != kNumClasses) throw Error(ErrorCode::InvalidConfig, "the generator produces exactly 4 classes");
      SynthConfig a;
      a.n = sy_train;
      a.seed = sy_seed;
      a.noise = sy_noise;
      a.split_name = "train";
      SynthConfig b = a;
      b.n = sy_test;
      b.split_name = "test";
      man.config() = {{"classes", sy_classes}, {"train", sy_train}, {"test", sy_test}, {"noise", sy_noise},
                      {"keyword_rate", a.keyword_rate}, {"min_words", a.min_words}, {"max_words", a.max_words}};
      man.seed("master", sy_seed);
      fs::path dir(sy_dir);
      atomic_write(dir / "train.jsonl", to_jsonl(synth_dataset(a)));
      atomic_write(dir / "test.jsonl", to_jsonl(synth_dataset(b)));
      man.output(dir / "train.jsonl");
      man.output(dir / "test.jsonl");
    } else if (sub == tag_cmd) {
      man.input(tt_corpus);
      man.seed("tagger", tt_opt.seed);
      man.config() = {{"iterations", tt_opt.iterations}, {"tagdict_min_count", tt_opt.tagdict_min_count},
                      {"tagdict_ratio", tt_opt.tagdict_ratio}};
      if (!fs::exists(tt_corpus)) throw Error(ErrorCode::FileNotFound, tt_corpus);
      PerceptronTagger t;
      t.train(parse_tagged_corpus(read_file(tt_corpus)), tt_opt);
      t.save(tt_output);
      man.output(tt_output);
    }
  } catch (const Error& e) {
    rc = exit_code_for(e.code());
    err = e.what();
    std::cerr << "error: " << err << "\n";
  } catch (const std::exception& e) {
    rc = kExitInvariant;
    err = std::string("internal error: ") + e.what();
    std::cerr << err << "\n";
  }
  man.write(rc, err);
  return rc;
}
