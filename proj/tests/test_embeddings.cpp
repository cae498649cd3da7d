#include <gtest/gtest.h>

#include "stagegate/embeddings.hpp"
#include "support.hpp"

using namespace stagegate;
using stagegate::testing::TempDir;

namespace {

EmbeddingTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
  EmbeddingTable t(dim);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-2, 2));
    t.add("w" + std::to_string(i), v);
  }
  return t;
}

void expect_same(const EmbeddingTable& a, const EmbeddingTable& b) {
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.dim(), b.dim());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a.word(i), b.word(i));
    for (std::size_t k = 0; k < a.dim(); ++k) ASSERT_EQ(a.vector(i)[k], b.vector(i)[k]);
  }
}

// Two topics whose words only ever appear with each other.
std::vector<std::vector<std::string>> topic_corpus(std::size_t n, std::uint64_t seed) {
  const std::vector<std::string> a = {"flood", "river", "levee", "water", "rain"};
  const std::vector<std::string> b = {"fire", "smoke", "ash", "flame", "burn"};
  Rng rng(seed);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& topic = i % 2 ? a : b;
    std::vector<std::string> s;
    for (int k = 0; k < 8; ++k) s.push_back(topic[rng.below(topic.size())]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(EmbeddingIo, TextFileWithoutHeader) {
  auto t = parse_embeddings_text("w 0.1 0.2\nv 0.3 0.4\n");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_FLOAT_EQ((*t.find("v"))[0], 0.3f);
  EXPECT_FLOAT_EQ((*t.find("v"))[1], 0.4f);
  EXPECT_FALSE(t.find("x").has_value());
}

TEST(EmbeddingIo, HeaderAndErrors) {
  auto t = parse_embeddings_text("2 3\na 1 2 3\nb 4 5 6\n");
  EXPECT_EQ(t.dim(), 3u);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_ERROR_CODE(parse_embeddings_text("a 1 2\nb 1 2 3\n"), InconsistentDimension);
  EXPECT_ERROR_CODE(parse_embeddings_text("3 2\na 1 2\n"), FormatError);
  EXPECT_ERROR_CODE(parse_embeddings_text("a 1 x\n"), FormatError);
  EXPECT_ERROR_CODE(parse_embeddings_text("\n\n"), EmptyEmbeddingTable);
  EXPECT_ERROR_CODE(parse_embeddings_binary("2 2\nab"), FormatError);
  EXPECT_ERROR_CODE(load_embeddings("/nonexistent/vectors.txt"), FileNotFound);
  EmbeddingTable two(2);
  const std::vector<float> three = {1, 2, 3};
  EXPECT_ERROR_CODE(two.add("x", three), InconsistentDimension);
}

TEST(EmbeddingIo, RoundTripBothFormats) {
  TempDir tmp;
  auto t = random_table(60, 7, 3);
  save_embeddings(t, tmp / "v.txt");
  save_embeddings(t, tmp / "v.bin");
  expect_same(load_embeddings(tmp / "v.txt"), t);
  expect_same(load_embeddings(tmp / "v.bin"), t);
  EXPECT_EQ(embedding_format_from_path(tmp / "v.bin"), EmbeddingFormat::Binary);
  EXPECT_EQ(embedding_format_from_path(tmp / "v.vec"), EmbeddingFormat::Text);
}

TEST(Nearest, CosineExtremes) {
  EmbeddingTable t(2);
  const std::vector<float> x = {1, 0}, same = {3, 0}, ortho = {0, 5}, opposite = {-1, 0};
  t.add("x", x);
  t.add("same", same);
  t.add("ortho", ortho);
  t.add("opp", opposite);
  auto r = nearest(t, "x", 10);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0].first, "same");
  EXPECT_NEAR(r[0].second, 1.0, 1e-12);
  EXPECT_EQ(r[1].first, "ortho");
  EXPECT_NEAR(r[1].second, 0.0, 1e-12);
  EXPECT_NEAR(r[2].second, -1.0, 1e-12);
  EXPECT_EQ(nearest(t, "x", 1).size(), 1u);
  EXPECT_ERROR_CODE(nearest(t, "missing", 3), WordNotFound);
}

TEST(Nearest, PropertiesOnRandomTables) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_table(30, 6, trial);
    const std::string q = "w" + std::to_string(rng.below(30));
    auto r = nearest(t, q, 10);
    ASSERT_EQ(r.size(), 10u);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_NE(r[i].first, q);
      EXPECT_GE(r[i].second, -1.0);
      EXPECT_LE(r[i].second, 1.0);
      if (i) EXPECT_GE(r[i - 1].second, r[i].second);
    }
    // scaling any vector by a positive constant leaves the ranking unchanged
    EmbeddingTable scaled(6);
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::vector<float> v(t.vector(i).begin(), t.vector(i).end());
      const float c = static_cast<float>(rng.uniform(0.5, 4));
      for (auto& x : v) x *= c;
      scaled.add(t.word(i), v);
    }
    auto s = nearest(scaled, q, 10);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(s[i].first, r[i].first);
      EXPECT_NEAR(s[i].second, r[i].second, 1e-6);
    }
  }
}

TEST(Word2vec, MinCountFiltersVocabulary) {
  std::vector<std::vector<std::string>> corpus = {{"a", "b", "a", "c"}, {"a", "b", "d"}, {"a", "e"}};
  W2vConfig cfg;
  cfg.dim = 8;
  cfg.min_count = 2;
  cfg.epochs = 2;
  auto t = train_word2vec(corpus, cfg);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_TRUE(t.contains("a"));
  EXPECT_TRUE(t.contains("b"));
  EXPECT_FALSE(t.contains("c"));
  EXPECT_EQ(t.dim(), 8u);
  ASSERT_TRUE(t.training.has_value());
  EXPECT_EQ(t.training->min_count, 2u);
  cfg.min_count = 10;
  EXPECT_ERROR_CODE(train_word2vec(corpus, cfg), EmptyCorpusAfterFiltering);
  cfg.dim = 0;
  EXPECT_ERROR_CODE(train_word2vec(corpus, cfg), InvalidConfig);
}

TEST(Word2vec, DeterministicSingleThread) {
  auto corpus = topic_corpus(200, 1);
  W2vConfig cfg;
  cfg.dim = 16;
  cfg.min_count = 1;
  cfg.epochs = 3;
  cfg.seed = 7;
  expect_same(train_word2vec(corpus, cfg), train_word2vec(corpus, cfg));
  auto other = cfg;
  other.seed = 8;
  auto a = train_word2vec(corpus, cfg), b = train_word2vec(corpus, other);
  EXPECT_NE(std::vector<float>(a.vector(0).begin(), a.vector(0).end()),
            std::vector<float>(b.vector(0).begin(), b.vector(0).end()));
}

TEST(Word2vec, CooccurringWordsEndUpCloser) {
  auto corpus = topic_corpus(2000, 2);
  W2vConfig cfg;
  cfg.dim = 20;
  cfg.min_count = 1;
  cfg.epochs = 5;
  cfg.subsample = 0;
  auto t = train_word2vec(corpus, cfg);
  auto cos = [&](const char* x, const char* y) { return cosine(*t.find(x), *t.find(y)); };
  const std::vector<std::pair<const char*, const char*>> within = {{"flood", "river"}, {"levee", "rain"}, {"fire", "ash"}};
  const std::vector<std::pair<const char*, const char*>> across = {{"flood", "fire"}, {"river", "smoke"}, {"rain", "burn"}};
  double w = 0, c = 0;
  for (auto [x, y] : within) w += cos(x, y) / within.size();
  for (auto [x, y] : across) c += cos(x, y) / across.size();
  EXPECT_GT(w, c + 0.3) << "within " << w << " across " << c;
  auto top = nearest(t, "flood", 4);
  for (const auto& [word, sim] : top) {
    EXPECT_TRUE(word == "river" || word == "levee" || word == "water" || word == "rain") << word;
  }
}

TEST(Word2vec, MultiThreadedProducesUsableTable) {
  auto corpus = topic_corpus(1000, 3);
  W2vConfig cfg;
  cfg.dim = 16;
  cfg.min_count = 1;
  cfg.threads = 2;
  cfg.subsample = 0;
  auto t = train_word2vec(corpus, cfg);
  EXPECT_EQ(t.size(), 10u);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (float x : t.vector(i)) EXPECT_TRUE(std::isfinite(x));
}
