#pragma once

// Word embeddings: skip-gram with negative sampling trainer, text/binary
// table I/O, cosine nearest neighbours.
//
// Text format:   optional header "<vocab_size> <d>", then "word f1 ... fd" per
//                line (space separated).
// Binary format: header "<vocab_size> <d>\n", then per entry the word bytes,
//                one ' ', d little-endian IEEE-754 float32 values and an
//                optional '\n'. This is the layout of the widely distributed
//                pretrained word2vec .bin files.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

struct W2vConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  std::size_t min_count = 5;
  double subsample = 1e-3;
  double lr_start = 0.025;
  double lr_end = 0.025 * 1e-4;
  std::uint64_t seed = 1;
  // 1 = deterministic; >1 = lock-free asynchronous updates across threads
  std::size_t threads = 1;

  void validate() const {
    if (dim < 1 || window < 1 || negatives < 1 || epochs < 1)
      throw Error(ErrorCode::InvalidConfig, "word2vec dim, window, negatives and epochs must be >= 1");
    if (!(lr_start > 0) || lr_end < 0 || threads < 1)
      throw Error(ErrorCode::InvalidConfig, "bad word2vec learning rate or thread count");
  }
};

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorCode::InconsistentDimension, "embedding dimension must be > 0");
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t i) const { return words_[i]; }

  std::span<const float> vector(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<float> vector(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  std::optional<std::size_t> index_of(std::string_view w) const {
    auto it = index_.find(std::string(w));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::span<const float>> find(std::string_view w) const {
    if (auto i = index_of(w)) return vector(*i);
    return std::nullopt;
  }

  bool contains(std::string_view w) const { return index_.count(std::string(w)) > 0; }

  /// Appends a word; a word already present keeps its first vector.
  void add(std::string word, std::span<const float> v) {
    if (v.size() != dim_)
      throw Error(ErrorCode::InconsistentDimension,
                  "vector for '" + word + "' has " + std::to_string(v.size()) + " components, expected " +
                      std::to_string(dim_));
    if (index_.count(word)) return;
    index_.emplace(word, words_.size());
    words_.push_back(std::move(word));
    data_.insert(data_.end(), v.begin(), v.end());
  }

  std::optional<W2vConfig> training;  // set when produced by train_word2vec

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

struct W2vState {
  std::vector<float> input;   // V x d, the output table
  std::vector<float> output;  // V x d, negative-sampling weights
  std::vector<double> noise_cdf;
};

template <bool Concurrent>
inline float load(float& x) {
  if constexpr (Concurrent) return std::atomic_ref<float>(x).load(std::memory_order_relaxed);
  else return x;
}

template <bool Concurrent>
inline void add_to(float& x, float delta) {
  if constexpr (Concurrent) {
    std::atomic_ref<float> r(x);
    r.store(r.load(std::memory_order_relaxed) + delta, std::memory_order_relaxed);
  } else {
    x += delta;
  }
}

template <bool Concurrent>
inline void train_pair(W2vState& s, std::size_t dim, std::size_t center, std::size_t context,
                       std::size_t negatives, float alpha, Rng& rng, std::vector<float>& grad) {
  std::fill(grad.begin(), grad.end(), 0.0f);
  float* in = s.input.data() + center * dim;
  for (std::size_t k = 0; k <= negatives; ++k) {
    std::size_t target;
    float label;
    if (k == 0) {
      target = context;
      label = 1.0f;
    } else {
      const double u = rng.uniform();
      target = static_cast<std::size_t>(
          std::upper_bound(s.noise_cdf.begin(), s.noise_cdf.end(), u) - s.noise_cdf.begin());
      if (target >= s.noise_cdf.size()) target = s.noise_cdf.size() - 1;
      if (target == context) continue;
      label = 0.0f;
    }
    float* out = s.output.data() + target * dim;
    float f = 0.0f;
    for (std::size_t j = 0; j < dim; ++j) f += load<Concurrent>(in[j]) * load<Concurrent>(out[j]);
    const float g = (label - sigmoid(f)) * alpha;
    for (std::size_t j = 0; j < dim; ++j) grad[j] += g * load<Concurrent>(out[j]);
    for (std::size_t j = 0; j < dim; ++j) add_to<Concurrent>(out[j], g * load<Concurrent>(in[j]));
  }
  for (std::size_t j = 0; j < dim; ++j) add_to<Concurrent>(in[j], grad[j]);
}

template <bool Concurrent>
inline void train_shard(W2vState& s, const W2vConfig& cfg, const std::vector<std::vector<std::size_t>>& sentences,
                        std::size_t begin, std::size_t end, const std::vector<double>& keep_prob,
                        std::size_t total_words, std::atomic<std::size_t>& processed, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> grad(cfg.dim);
  std::vector<std::size_t> kept;
  const double total = static_cast<double>(total_words * cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t si = begin; si < end; ++si) {
      const auto& sent = sentences[si];
      kept.clear();
      for (auto w : sent) {
        if (keep_prob[w] >= 1.0 || rng.uniform() < keep_prob[w]) kept.push_back(w);
      }
      const double progress = static_cast<double>(processed.load(std::memory_order_relaxed)) / total;
      const auto alpha = static_cast<float>(
          std::max(cfg.lr_end, cfg.lr_start - (cfg.lr_start - cfg.lr_end) * progress));
      for (std::size_t i = 0; i < kept.size(); ++i) {
        const std::size_t reduced = rng.below(cfg.window);  // effective radius window - reduced
        const std::size_t radius = cfg.window - reduced;
        const std::size_t lo = i >= radius ? i - radius : 0;
        const std::size_t hi = std::min(kept.size(), i + radius + 1);
        for (std::size_t c = lo; c < hi; ++c) {
          if (c == i) continue;
          train_pair<Concurrent>(s, cfg.dim, kept[i], kept[c], cfg.negatives, alpha, rng, grad);
        }
      }
      processed.fetch_add(sent.size(), std::memory_order_relaxed);
    }
  }
}

}  // namespace detail

/// Skip-gram with negative sampling. Vocabulary = words with count >=
/// min_count, ordered by descending count then lexicographically. Noise
/// distribution is unigram^0.75. Frequent words are subsampled with keep
/// probability (sqrt(f / (t * total)) + 1) * (t * total) / f. Learning rate
/// decays linearly from lr_start to lr_end over all epochs. The context
/// radius for each center word is drawn uniformly from [1, window].
inline EmbeddingTable train_word2vec(const std::vector<std::vector<std::string>>& corpus, const W2vConfig& cfg) {
  cfg.validate();
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : corpus) {
    for (const auto& w : s) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> vocab;
  for (auto& [w, c] : counts) {
    if (c >= cfg.min_count) vocab.emplace_back(w, c);
  }
  if (vocab.empty()) throw Error(ErrorCode::EmptyCorpusAfterFiltering, "no word reaches min_count");
  std::sort(vocab.begin(), vocab.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i].first, i);

  std::vector<std::vector<std::size_t>> sentences;
  std::size_t total_words = 0;
  for (const auto& s : corpus) {
    std::vector<std::size_t> ids;
    for (const auto& w : s) {
      if (auto it = index.find(w); it != index.end()) ids.push_back(it->second);
    }
    total_words += ids.size();
    if (ids.size() >= 2) sentences.push_back(std::move(ids));
  }

  const std::size_t V = vocab.size();
  const std::size_t d = cfg.dim;
  detail::W2vState state;
  state.input.resize(V * d);
  state.output.assign(V * d, 0.0f);
  Rng init(derive_seed(cfg.seed, "w2v-init"));
  for (auto& x : state.input) x = static_cast<float>((init.uniform() - 0.5) / static_cast<double>(d));

  double z = 0;
  state.noise_cdf.resize(V);
  for (std::size_t i = 0; i < V; ++i) {
    z += std::pow(static_cast<double>(vocab[i].second), 0.75);
    state.noise_cdf[i] = z;
  }
  for (auto& c : state.noise_cdf) c /= z;

  std::vector<double> keep(V, 1.0);
  if (cfg.subsample > 0) {
    const double t = cfg.subsample * static_cast<double>(total_words);
    for (std::size_t i = 0; i < V; ++i) {
      const double f = static_cast<double>(vocab[i].second);
      keep[i] = (std::sqrt(f / t) + 1.0) * t / f;
    }
  }

  std::atomic<std::size_t> processed{0};
  if (cfg.threads <= 1) {
    detail::train_shard<false>(state, cfg, sentences, 0, sentences.size(), keep, total_words, processed,
                               derive_seed(cfg.seed, "w2v-train"));
  } else {
    std::vector<std::thread> workers;
    const std::size_t n = sentences.size();
    for (std::size_t t = 0; t < cfg.threads; ++t) {
      const std::size_t b = n * t / cfg.threads, e = n * (t + 1) / cfg.threads;
      workers.emplace_back([&, b, e, t] {
        detail::train_shard<true>(state, cfg, sentences, b, e, keep, total_words, processed,
                                  derive_seed(cfg.seed, "w2v-train-" + std::to_string(t)));
      });
    }
    for (auto& w : workers) w.join();
  }

  EmbeddingTable table(d);
  for (std::size_t i = 0; i < V; ++i) {
    table.add(vocab[i].first, std::span<const float>(state.input.data() + i * d, d));
  }
  table.training = cfg;
  return table;
}

// ---------------------------------------------------------------------------
// I/O

enum class EmbeddingFormat { Text, Binary };

inline EmbeddingFormat embedding_format_from_path(const std::filesystem::path& p) {
  return p.extension() == ".bin" ? EmbeddingFormat::Binary : EmbeddingFormat::Text;
}

namespace detail {

inline bool parse_size(std::string_view s, std::size_t& out) {
  if (s.empty()) return false;
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  out = v;
  return true;
}

inline float read_le_float(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

inline void write_le_float(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

}  // namespace detail

inline EmbeddingTable parse_embeddings_text(std::string_view content) {
  std::optional<EmbeddingTable> table;
  std::optional<std::size_t> declared;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<float> v;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    auto line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto cols = split_whitespace(line);
    if (cols.empty()) continue;
    std::size_t a = 0, b = 0;
    if (line_no == 1 && cols.size() == 2 && detail::parse_size(cols[0], a) && detail::parse_size(cols[1], b)) {
      if (b == 0) throw Error(ErrorCode::FormatError, "dimension must be > 0", line_no);
      declared = a;
      table.emplace(b);
      continue;
    }
    if (cols.size() < 2) throw Error(ErrorCode::FormatError, "row needs a word and at least one value", line_no);
    v.clear();
    for (std::size_t i = 1; i < cols.size(); ++i) {
      char* end = nullptr;
      const float f = std::strtof(cols[i].c_str(), &end);
      if (end != cols[i].c_str() + cols[i].size())
        throw Error(ErrorCode::FormatError, "non-numeric value '" + cols[i] + "'", line_no);
      v.push_back(f);
    }
    if (!table) table.emplace(v.size());
    if (v.size() != table->dim())
      throw Error(ErrorCode::InconsistentDimension,
                  "row has " + std::to_string(v.size()) + " values, expected " + std::to_string(table->dim()),
                  line_no);
    table->add(cols[0], v);
  }
  if (!table || table->empty()) throw Error(ErrorCode::EmptyEmbeddingTable, "no embedding rows");
  if (declared && *declared != table->size())
    throw Error(ErrorCode::FormatError,
                "header declares " + std::to_string(*declared) + " words, found " + std::to_string(table->size()), 1);
  return std::move(*table);
}

inline EmbeddingTable parse_embeddings_binary(std::string_view content) {
  auto nl = content.find('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::FormatError, "missing header", 1);
  auto head = split_whitespace(content.substr(0, nl));
  std::size_t count = 0, dim = 0;
  if (head.size() != 2 || !detail::parse_size(head[0], count) || !detail::parse_size(head[1], dim) || dim == 0)
    throw Error(ErrorCode::FormatError, "header must be '<vocab_size> <d>'", 1);
  EmbeddingTable table(dim);
  std::size_t pos = nl + 1;
  std::vector<float> v(dim);
  const auto* bytes = reinterpret_cast<const unsigned char*>(content.data());
  for (std::size_t i = 0; i < count; ++i) {
    while (pos < content.size() && (content[pos] == '\n' || content[pos] == '\r')) ++pos;
    auto sp = content.find(' ', pos);
    if (sp == std::string_view::npos || sp == pos)
      throw Error(ErrorCode::FormatError, "truncated entry " + std::to_string(i + 1), i + 2);
    std::string word(content.substr(pos, sp - pos));
    pos = sp + 1;
    if (pos + 4 * dim > content.size())
      throw Error(ErrorCode::FormatError, "truncated vector for '" + word + "'", i + 2);
    for (std::size_t j = 0; j < dim; ++j) v[j] = detail::read_le_float(bytes + pos + 4 * j);
    pos += 4 * dim;
    table.add(std::move(word), v);
  }
  if (table.empty()) throw Error(ErrorCode::EmptyEmbeddingTable, "no embedding rows");
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
  const auto content = read_file(path);
  return format == EmbeddingFormat::Binary ? parse_embeddings_binary(content) : parse_embeddings_text(content);
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return load_embeddings(path, embedding_format_from_path(path));
}

inline std::string serialize_embeddings(const EmbeddingTable& t, EmbeddingFormat format) {
  std::string out = std::to_string(t.size()) + " " + std::to_string(t.dim()) + "\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += t.word(i);
    if (format == EmbeddingFormat::Binary) {
      out += ' ';
      for (float f : t.vector(i)) detail::write_le_float(out, f);
      out += '\n';
    } else {
      char buf[32];
      for (float f : t.vector(i)) {
        std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(f));
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

inline void save_embeddings(const EmbeddingTable& t, const std::filesystem::path& path) {
  atomic_write(path, serialize_embeddings(t, embedding_format_from_path(path)));
}

// ---------------------------------------------------------------------------
// Queries

inline double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

/// Top-k other words by cosine similarity, descending; ties broken by word.
inline std::vector<std::pair<std::string, double>> nearest(const EmbeddingTable& table, std::string_view word,
                                                           std::size_t k) {
  auto self = table.index_of(word);
  if (!self) throw Error(ErrorCode::WordNotFound, std::string(word));
  const auto q = table.vector(*self);
  std::vector<std::pair<std::string, double>> all;
  all.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (i == *self) continue;
    all.emplace_back(table.word(i), cosine(q, table.vector(i)));
  }
  auto better = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

}  // namespace stagegate
