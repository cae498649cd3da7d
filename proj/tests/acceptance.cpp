// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runtime budgets are part of each criterion.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "stagegate/eval.hpp"
#include "stagegate/features.hpp"
#include "stagegate/models.hpp"
#include "stagegate/nncore.hpp"
#include "stagegate/svm.hpp"
#include "stagegate/synth.hpp"

namespace fs = std::filesystem;
using namespace stagegate;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 6) {
  std::ostringstream o;
  o.precision(digits);
  o << x;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. tf-idf against the brute-force oracle

Outcome tfidf_oracle() {
  Rng rng(21);
  const std::vector<std::string> words = {"flood", "road", "closed", "shelter", "water", "power",
                                          "crew",  "help", "open",   "storm",   "thank", "safe"};
  std::vector<std::vector<std::string>> docs;
  for (int d = 0; d < 20; ++d) {
    std::vector<std::string> doc;
    for (std::size_t n = 3 + rng.below(12); n > 0; --n) doc.push_back(words[rng.below(words.size())]);
    docs.push_back(std::move(doc));
  }
  const std::vector<int> orders = {1, 2, 3};
  const auto expect = oracle::tfidf(docs, orders, 1);
  auto vocab = build_vocabulary(std::span<const std::vector<std::string>>(docs), orders, 1);
  auto idf = fit_idf(vocab);
  double worst = 0;
  std::size_t coords = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto x = bow_vector(docs[i], vocab, BowMode::Tfidf, &idf);
    if (x.nnz() != expect[i].size()) return {false, "nonzero count differs in document " + std::to_string(i)};
    for (const auto& [term, w] : expect[i]) {
      const auto j = vocab.index_of(term);
      if (!j) return {false, "term missing from vocabulary: " + term};
      worst = std::max(worst, std::abs(x.value(*j) - w));
      ++coords;
    }
  }
  return {worst <= 1e-9, std::to_string(coords) + " coordinates, max abs diff " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 2. gradient checks

nn::Tensor<double> random_tensor(nn::Shape s, Rng& rng, double lo = -1, double hi = 1) {
  nn::Tensor<double> t(s);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

void randomize(nn::Layer<double>& layer, Rng& rng, double scale = 1.0) {
  for (auto* p : layer.params())
    if (p->trainable)
      for (auto& x : p->value.data) x = rng.uniform(-scale, scale);
}

Outcome gradient_checks() {
  constexpr double kTol = 1e-4;
  Rng rng(11);
  std::vector<std::pair<std::string, nn::GradCheckReport>> reports;
  auto probe = [&](const std::string& name, nn::Layer<double>& layer, nn::Tensor<double> x) {
    const auto r = random_tensor(layer.output_shape(x.shape), rng);
    reports.emplace_back(name, nn::gradient_check_layer(layer, x, r));
  };

  nn::Dense<double> dense(6, 4);
  randomize(dense, rng);
  probe("dense", dense, random_tensor({3, 1, 2, 3}, rng));

  nn::Conv2d<double> conv5(2, 3, 5, 1, 2, 1);
  randomize(conv5, rng, 0.5);
  probe("conv5x1/2", conv5, random_tensor({2, 2, 21, 6}, rng));
  nn::Conv2d<double> conv3(2, 3, 3, 1, 2, 1);
  randomize(conv3, rng, 0.5);
  probe("conv3x1/2", conv3, random_tensor({2, 2, 15, 6}, rng));

  nn::MaxPool2d<double> pool(3, 1);
  probe("maxpool", pool, random_tensor({2, 2, 9, 4}, rng));

  nn::BatchNorm<double> bn(3);
  randomize(bn, rng);
  probe("batchnorm", bn, random_tensor({4, 3, 5, 2}, rng, -2, 3));

  for (auto act : {nn::GruActivation::Relu, nn::GruActivation::Tanh}) {
    nn::Gru<double> gru(4, 3, act);
    gru.init(rng);
    randomize(gru, rng, 0.8);
    probe(act == nn::GruActivation::Relu ? "gru(relu)" : "gru(tanh)", gru, random_tensor({2, 1, 5, 4}, rng));
  }

  {
    auto z = random_tensor({6, 4, 1, 1}, rng, -3, 3);
    const std::vector<std::size_t> gold = {0, 3, 1, 2, 3, 1};
    const auto ref = nn::softmax_xent(z, gold);
    nn::GradCheckReport rep;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double orig = z.data[i];
      z.data[i] = orig + 1e-6;
      const double fp = nn::softmax_xent(z, gold).loss;
      z.data[i] = orig - 1e-6;
      const double fm = nn::softmax_xent(z, gold).loss;
      z.data[i] = orig;
      rep.max_rel_error = std::max(rep.max_rel_error, nn::relative_error(ref.grad.data[i], (fp - fm) / 2e-6));
      ++rep.checked;
    }
    reports.emplace_back("softmax-xent", rep);
  }

  bool ok = true;
  std::string detail;
  for (const auto& [name, rep] : reports) {
    ok = ok && rep.checked > 0 && rep.max_rel_error < kTol;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt(rep.max_rel_error, 2);
    if (rep.skipped) detail += " (" + std::to_string(rep.skipped) + " kinks)";
  }
  return {ok, "max rel error: " + detail};
}

// ---------------------------------------------------------------------------
// 3. CNN shape arithmetic for the 300 + 5 wide embedding

Outcome cnn_shapes() {
  auto m = build_cnn(305);
  if (m.input_length() != 30500) return {false, "input length " + std::to_string(m.input_length())};
  const std::vector<nn::Shape> want_convpool = {
      {1, 100, 48, 305}, {1, 100, 9, 305}, {1, 200, 4, 305}, {1, 200, 1, 305}};
  const auto chain = m.shape_chain();
  auto& net = m.net();
  std::vector<nn::Shape> convpool, dense;
  std::size_t flat = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto name = net.layer(i).name();
    if (name.starts_with("conv") || name.starts_with("maxpool")) convpool.push_back(chain[i]);
    if (name.starts_with("dense")) dense.push_back(chain[i]);
    if (name.starts_with("dropout")) flat = chain[i][1] * chain[i][2] * chain[i][3];
  }
  if (convpool != want_convpool) return {false, "conv/pool chain differs"};
  if (flat != 61000) return {false, "flattened length " + std::to_string(flat)};
  if (dense != std::vector<nn::Shape>{{1, 200, 1, 1}, {1, 4, 1, 1}}) return {false, "dense chain differs"};

  Rng rng(3);
  EmbeddedMessage e;
  e.width = 305;
  e.true_length = 37;
  e.data.assign(kMaxWords * 305, 0.0f);
  for (std::size_t i = 0; i < 37 * 305; ++i) e.data[i] = static_cast<float>(rng.uniform(-1, 1));
  m.predict(e);
  const auto& traced = net.traced_shapes();
  if (traced.size() != chain.size()) return {false, "traced layer count differs"};
  for (std::size_t i = 0; i < chain.size(); ++i)
    if (traced[i] != chain[i]) return {false, "runtime shape differs at " + net.layer(i).name()};
  return {true, "30500 -> 48x305 -> 9x305 -> 4x305 -> 1x305 -> 61000 -> 200 -> 4, " + std::to_string(chain.size()) +
                    " layers traced"};
}

// ---------------------------------------------------------------------------
// 4. weighted F1 against published rows

Outcome weighted_f1_consistency() {
  const std::vector<std::size_t> supports = {266, 139, 389, 711};
  const double tfidf = weighted_f1(std::vector<double>{0.668, 0.777, 0.787, 0.886}, supports);
  const double boolean = weighted_f1(std::vector<double>{0.429, 0.674, 0.709, 0.802}, supports);
  const bool ok = std::abs(tfidf - 0.810) <= 0.005 && std::abs(boolean - 0.697) <= 0.005;
  return {ok, "Tfidf " + fmt(tfidf, 5) + " vs 0.810, Bool " + fmt(boolean, 5) + " vs 0.697"};
}

// ---------------------------------------------------------------------------
// 5. SVM geometry on a separable set

Outcome svm_geometry() {
  Rng rng(5);
  std::vector<SparseVector> X;
  std::vector<StageLabel> y;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t c = i % kNumClasses;
    std::map<std::uint32_t, double> v;
    for (std::uint32_t k = 0; k < 6; ++k) v[k] = rng.uniform(-0.5, 0.5);
    v[static_cast<std::uint32_t>(c)] += 3.0;
    X.push_back(SparseVector::from_map(6, v));
    y.push_back(label_from_index(c));
  }
  SvmConfig cfg;
  cfg.C = 1e4;
  cfg.tol = 1e-10;
  cfg.max_epochs = 100000;
  const auto m = train_svm(X, y, cfg);
  const auto preds = m.predict(X);
  std::size_t correct = 0;
  double min_margin = 1e300;
  for (std::size_t i = 0; i < X.size(); ++i) {
    correct += preds[i] == y[i];
    const auto s = m.decision_values(X[i]);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double sign = label_index(y[i]) == c ? 1.0 : -1.0;
      min_margin = std::min(min_margin, sign * s[c]);
    }
  }
  bool invariant = true;
  for (double k : {1e-3, 0.37, 5.0, 1e4}) {
    auto scaled = m;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      for (auto& w : scaled.w[c]) w *= k;
      scaled.b[c] *= k;
    }
    invariant = invariant && scaled.predict(X) == preds;
  }
  const bool ok = correct == X.size() && min_margin >= 1 - 1e-6 && invariant;
  return {ok, "accuracy " + std::to_string(correct) + "/100, min functional margin " + fmt(min_margin, 10) +
                  ", rescaling invariant " + (invariant ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 6, 9, 10. experiment runs

nlohmann::json synthetic_experiment() {
  return {
      {"name", "synthetic"},
      {"train", "data/train.jsonl"},
      {"test", "data/test.jsonl"},
      {"output", "run"},
      {"seed", 1},
      {"jobs", 1},
      {"embeddings", {{"custom", {{"dim", 50}}}}},
      {"svm", {{"C_grid", {0.001, 0.01, 0.1, 1, 10}}, {"folds", 10}}},
      {"rnn", {{"lr", 0.003}, {"epochs", 20}}},
      {"cnn", {{"epochs", 3}}},
      {"experiments",
       {{{"kind", "svm_bow"}, {"name", "svm"}, {"rows", {"Tfidf"}}},
        {{"kind", "rnn"}, {"name", "rnn"}, {"rows", {"CW2V"}}},
        {{"kind", "cnn"}, {"name", "cnn"}, {"rows", {"CW2V"}}}}},
  };
}

void write_synthetic(const fs::path& dir, std::size_t n_train, std::size_t n_test) {
  SynthConfig tr;
  tr.n = n_train;
  tr.seed = 7;
  save_corpus(synth_dataset(tr), dir / "train.jsonl");
  SynthConfig te = tr;
  te.n = n_test;
  te.seed = 8;
  te.split_name = "test";
  save_corpus(synth_dataset(te), dir / "test.jsonl");
}

struct RunState {
  fs::path config;
  std::optional<ExperimentResult> first;
  double first_seconds = 0;
};

ExperimentResult run_config(const fs::path& config, const fs::path& output, const Preprocessor& prep) {
  auto spec = load_experiment_spec(config);
  spec.output = output;
  return run_experiment(spec, prep);
}

Outcome end_to_end(const fs::path& work, const Preprocessor& prep, RunState& st) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(work / "data");
  write_synthetic(work / "data", 2000, 500);
  st.config = work / "synthetic.json";
  atomic_write(st.config, synthetic_experiment().dump(2) + "\n");
  st.first = run_config(st.config, work / "run_a", prep);
  st.first_seconds = seconds_since(t0);
  const double svm = st.first->tables[0].rows[0].report.f_avg;
  const double rnn = st.first->tables[1].rows[0].report.f_avg;
  const double cnn = st.first->tables[2].rows[0].report.f_avg;
  const bool ok = svm >= 0.95 && rnn >= 0.90 && cnn >= 0.85 && st.first_seconds < 600;
  return {ok, "weighted F1 svm/tfidf " + fmt(svm, 4) + ", rnn " + fmt(rnn, 4) + ", cnn " + fmt(cnn, 4) + " in " +
                  fmt(st.first_seconds, 4) + " s"};
}

Outcome determinism(const fs::path& work, const Preprocessor& prep, const RunState& st) {
  if (!st.first) return {false, "the end-to-end run did not complete"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto second = run_config(st.config, work / "run_b", prep);
  const double secs = seconds_since(t0);
  std::size_t compared = 0;
  for (const auto& tab : st.first->tables) {
    std::vector<fs::path> files = {fs::path(tab.name) / "summary.csv"};
    for (const auto& row : tab.rows) {
      const auto cell = fs::path(tab.name) / detail::cell_dir_name(row.representation);
      files.push_back(cell / "report.csv");
      files.push_back(cell / "confusion.csv");
    }
    for (const auto& f : files) {
      if (read_file(work / "run_a" / f) != read_file(work / "run_b" / f)) return {false, f.string() + " differs"};
      ++compared;
    }
  }
  const bool ok = secs <= 2 * st.first_seconds;
  return {ok, std::to_string(compared) + " report files byte-identical, rerun " + fmt(secs, 4) + " s"};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  for (auto& l : split(s, '\n'))
    if (!l.empty()) out.push_back(l);
  return out;
}

Outcome table_shapes(const fs::path& work, const fs::path& golden, const Preprocessor& prep) {
  fs::create_directories(work / "data");
  write_synthetic(work / "data", 240, 80);
  const nlohmann::json cfg = {
      {"name", "tables"},
      {"train", "data/train.jsonl"},
      {"test", "data/test.jsonl"},
      {"output", "run"},
      {"embeddings", {{"custom", {{"dim", 8}, {"w2v", {{"min_count", 2}, {"epochs", 2}}}}},
                      {"generic", {{"dim", 12}, {"w2v", {{"min_count", 2}, {"epochs", 2}}}}}}},
      {"svm", {{"C", 0.1}}},
      {"cnn", {{"epochs", 1}}},
      {"rnn", {{"epochs", 1}, {"hidden", 8}}},
      {"experiments",
       {{{"kind", "svm_bow"}, {"name", "svm_bow"}},
        {{"kind", "svm_w2v"}, {"name", "svm_w2v"}},
        {{"kind", "cnn"}, {"name", "cnn"}},
        {{"kind", "rnn"}, {"name", "rnn"}}}},
  };
  atomic_write(work / "tables.json", cfg.dump(2) + "\n");
  run_config(work / "tables.json", work / "run", prep);

  const auto t0 = std::chrono::steady_clock::now();
  for (const char* name : {"svm_bow", "svm_w2v", "cnn", "rnn"}) {
    const auto want = lines_of(read_file(golden / (std::string(name) + ".csv")));
    const auto got = lines_of(read_file(work / "run" / name / "summary.csv"));
    if (got.size() != want.size()) return {false, std::string(name) + ": row count differs"};
    if (got[0] != want[0]) return {false, std::string(name) + ": header differs"};
    for (std::size_t r = 1; r < got.size(); ++r) {
      const auto cells = split(got[r], ',');
      if (cells.size() != 6 || cells[0] != want[r]) return {false, std::string(name) + ": row " + want[r] + " differs"};
      for (std::size_t k = 1; k < cells.size(); ++k) {
        const double v = std::stod(cells[k]);
        if (!(v >= 0 && v <= 1)) return {false, std::string(name) + ": score outside [0,1]"};
      }
    }
  }
  const double secs = seconds_since(t0);
  return {secs < 1, "svm_bow, svm_w2v, cnn and rnn summaries match their golden row/column structure"};
}

// ---------------------------------------------------------------------------
// 7. skip-gram co-occurrence property

Outcome cooccurrence() {
  const auto corpus = cooccurrence_corpus(3);
  W2vConfig cfg;
  cfg.dim = 50;
  cfg.min_count = 1;
  cfg.subsample = 0;
  cfg.seed = 3;
  const auto table = train_word2vec(corpus.sentences, cfg);
  double within = 0;
  std::size_t n_within = 0;
  for (const auto& g : corpus.groups)
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        within += cosine(*table.find(g[a]), *table.find(g[b]));
        ++n_within;
      }
  Rng rng(4);
  double random = 0;
  const std::size_t n_random = 2000;
  for (std::size_t i = 0; i < n_random; ++i) {
    const std::size_t a = rng.below(table.size());
    std::size_t b = rng.below(table.size() - 1);
    if (b >= a) ++b;
    random += cosine(table.vector(a), table.vector(b));
  }
  within /= static_cast<double>(n_within);
  random /= static_cast<double>(n_random);
  return {within - random >= 0.2,
          "mean cosine co-occurring " + fmt(within, 4) + ", random " + fmt(random, 4)};
}

// ---------------------------------------------------------------------------
// 8. padding and truncation

Outcome padding_contract(const Preprocessor& prep) {
  Rng rng(8);
  std::vector<std::string> vocab;
  for (int i = 0; i < 200; ++i) {
    std::string w;
    for (std::size_t n = 4 + rng.below(5); n > 0; --n) w += static_cast<char>('a' + rng.below(26));
    vocab.push_back(w);
  }
  EmbeddingTable table(16);
  for (std::size_t i = 0; i < vocab.size(); i += 2) {
    std::vector<float> v(16);
    for (auto& x : v) x = static_cast<float>(rng.uniform(0.1, 1.0));
    table.add(vocab[i], v);
  }
  std::size_t short_msgs = 0, long_msgs = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = t % 2 ? 1 + rng.below(99) : 150;
    std::vector<std::string> ws;
    for (std::size_t k = 0; k < len; ++k) ws.push_back(vocab[rng.below(vocab.size())]);
    Message m;
    m.id = std::to_string(t);
    m.text = join(std::span<const std::string>(ws), " ");
    const auto pm = prep.process(m);
    if (pm.tokens.size() != len) return {false, "tokenizer changed the word count of message " + m.id};
    const auto e = embed_matrix(pm, table, t % 3 == 0);
    if (e.true_length != std::min<std::size_t>(len, kMaxWords)) return {false, "true length wrong for " + m.id};
    for (std::size_t r = e.true_length; r < kMaxWords; ++r)
      for (float x : e.row(r))
        if (x != 0.0f) return {false, "nonzero padding row in message " + m.id};
    for (std::size_t r = 0; r < e.true_length; ++r) {
      const auto v = table.find(ws[r]);
      for (std::size_t k = 0; k < 16; ++k)
        if (e.at(r, k) != (v ? (*v)[k] : 0.0f)) return {false, "row " + std::to_string(r) + " is not word " + std::to_string(r)};
    }
    (len < kMaxWords ? short_msgs : long_msgs) += 1;
  }
  return {true, std::to_string(short_msgs) + " short messages zero-padded, " + std::to_string(long_msgs) +
                    " 150-word messages truncated to their first 100 words"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work_dir = (fs::temp_directory_path() / "stagegate-acceptance").string();
  std::string golden_dir = STAGEGATE_GOLDEN_DIR;
  std::vector<int> only;
  app.add_option("--work-dir", work_dir, "Scratch directory (wiped first)");
  app.add_option("--golden-dir", golden_dir);
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path work(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);
  const auto prep = Preprocessor::with_bundled_model();
  RunState run_state;

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"tf-idf oracle", [] { return tfidf_oracle(); }},
      {"gradient checks", [] { return gradient_checks(); }},
      {"CNN shape arithmetic", [] { return cnn_shapes(); }},
      {"weighted-F1 consistency", [] { return weighted_f1_consistency(); }},
      {"SVM geometry", [] { return svm_geometry(); }},
      {"end-to-end synthetic pipeline", [&] { return end_to_end(work / "synthetic", prep, run_state); }},
      {"embedding co-occurrence", [] { return cooccurrence(); }},
      {"padding contract", [&] { return padding_contract(prep); }},
      {"determinism", [&] { return determinism(work / "synthetic", prep, run_state); }},
      {"table shapes", [&] { return table_shapes(work / "tables", golden_dir, prep); }},
  };
  const std::vector<double> budgets = {1, 30, 1, 1, 5, 600, 120, 5, 1200, 600};

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (secs > budgets[i]) {
      o.pass = false;
      o.detail += "; over the " + fmt(budgets[i]) + " s budget";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
    failed += !o.pass;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return failed ? 1 : 0;
}
