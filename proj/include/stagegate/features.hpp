#pragma once

// Sparse BOW / POS / DESC vectors, dense padded embedding matrices and the
// fitted featurizer used by the linear models.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/embeddings.hpp"
#include "stagegate/error.hpp"
#include "stagegate/preprocess.hpp"
#include "stagegate/textprep.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

// ---------------------------------------------------------------------------
// SparseVector

struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing index, no zeros

  SparseVector() = default;
  explicit SparseVector(std::size_t d) : dim(d) {}

  std::size_t nnz() const { return entries.size(); }

  /// Builds from an ordered map, dropping zeros.
  static SparseVector from_map(std::size_t dim, const std::map<std::uint32_t, double>& m) {
    SparseVector v(dim);
    for (auto [i, x] : m) {
      if (x != 0.0) v.entries.emplace_back(i, x);
    }
    return v;
  }

  static SparseVector from_dense(std::span<const double> x) {
    SparseVector v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] != 0.0) v.entries.emplace_back(static_cast<std::uint32_t>(i), x[i]);
    }
    return v;
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(dim, 0.0);
    for (auto [i, x] : entries) out[i] = x;
    return out;
  }

  double value(std::uint32_t i) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), i,
                               [](const auto& e, std::uint32_t k) { return e.first < k; });
    return it != entries.end() && it->first == i ? it->second : 0.0;
  }

  double norm() const {
    double s = 0;
    for (auto& e : entries) s += e.second * e.second;
    return std::sqrt(s);
  }

  double dot(std::span<const double> w) const {
    double s = 0;
    for (auto [i, x] : entries) s += w[i] * x;
    return s;
  }

  bool valid() const {
    for (std::size_t k = 0; k < entries.size(); ++k) {
      if (entries[k].first >= dim || entries[k].second == 0.0) return false;
      if (k && entries[k - 1].first >= entries[k].first) return false;
    }
    return true;
  }

  bool operator==(const SparseVector&) const = default;
};

// ---------------------------------------------------------------------------
// BOW

enum class BowMode { Bool, Freq, Tfidf };

inline std::string_view bow_mode_name(BowMode m) {
  switch (m) {
    case BowMode::Bool: return "Bool";
    case BowMode::Freq: return "Freq";
    case BowMode::Tfidf: return "Tfidf";
  }
  return "?";
}

inline BowMode parse_bow_mode(std::string_view s) {
  const auto l = to_lower(s);
  if (l == "bool") return BowMode::Bool;
  if (l == "freq") return BowMode::Freq;
  if (l == "tfidf") return BowMode::Tfidf;
  throw Error(ErrorCode::InvalidConfig, "unknown BOW mode '" + std::string(s) + "'");
}

inline void validate_orders(const std::vector<int>& orders) {
  if (orders.empty()) throw Error(ErrorCode::InvalidConfig, "n-gram orders must be non-empty");
  for (int n : orders) {
    if (n < 1 || n > 3) throw Error(ErrorCode::InvalidConfig, "n-gram order must be in {1,2,3}");
  }
}

/// Lemma n-grams joined by single spaces, with multiplicity.
inline std::map<std::string, std::size_t> extract_ngrams(std::span<const std::string> lemmas,
                                                         const std::vector<int>& orders) {
  std::map<std::string, std::size_t> out;
  for (int n : orders) {
    const auto un = static_cast<std::size_t>(n);
    if (lemmas.size() < un) continue;
    for (std::size_t i = 0; i + un <= lemmas.size(); ++i) {
      std::string g = lemmas[i];
      for (std::size_t k = 1; k < un; ++k) {
        g += ' ';
        g += lemmas[i + k];
      }
      ++out[g];
    }
  }
  return out;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<std::size_t>& doc_freq() const { return df_; }
  const std::vector<int>& orders() const { return orders_; }
  std::size_t min_df() const { return min_df_; }
  std::size_t n_docs() const { return n_docs_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  std::optional<std::uint32_t> index_of(const std::string& g) const {
    auto it = index_.find(g);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  static Vocabulary from_parts(std::vector<int> orders, std::size_t min_df, std::size_t n_docs,
                               std::vector<std::string> terms, std::vector<std::size_t> df) {
    if (terms.size() != df.size()) throw Error(ErrorCode::FormatError, "vocabulary term/df length mismatch");
    Vocabulary v;
    v.orders_ = std::move(orders);
    v.min_df_ = min_df;
    v.n_docs_ = n_docs;
    v.terms_ = std::move(terms);
    v.df_ = std::move(df);
    for (std::size_t i = 0; i < v.terms_.size(); ++i) v.index_.emplace(v.terms_[i], static_cast<std::uint32_t>(i));
    std::uint64_t h = fnv1a("vocab");
    for (int n : v.orders_) h = fnv1a(std::to_string(n) + ",", h);
    h = fnv1a(std::to_string(v.min_df_) + "|" + std::to_string(v.n_docs_) + "|", h);
    for (std::size_t i = 0; i < v.terms_.size(); ++i) {
      h = fnv1a(v.terms_[i], h);
      h = fnv1a("\t" + std::to_string(v.df_[i]) + "\n", h);
    }
    v.fingerprint_ = h;
    return v;
  }

 private:
  std::vector<int> orders_;
  std::size_t min_df_ = 1;
  std::size_t n_docs_ = 0;
  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::uint64_t fingerprint_ = 0;
};

/// Indices are assigned in lexicographic order of the n-gram strings.
inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> docs, const std::vector<int>& orders,
                                   std::size_t min_df) {
  if (docs.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build a vocabulary from zero documents");
  validate_orders(orders);
  if (min_df < 1) throw Error(ErrorCode::InvalidConfig, "min_df must be >= 1");
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    for (const auto& [g, c] : extract_ngrams(d, orders)) ++df[g];
  }
  std::vector<std::string> terms;
  std::vector<std::size_t> counts;
  for (auto& [g, c] : df) {
    if (c >= min_df) {
      terms.push_back(g);
      counts.push_back(c);
    }
  }
  return Vocabulary::from_parts(orders, min_df, docs.size(), std::move(terms), std::move(counts));
}

inline Vocabulary build_vocabulary(std::span<const ProcessedMessage> corpus, const std::vector<int>& orders,
                                   std::size_t min_df) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& pm : corpus) docs.push_back(pm.lemmas());
  return build_vocabulary(std::span<const std::vector<std::string>>(docs), orders, min_df);
}

enum class IdfVariant {
  Smoothed,  // ln((1+N)/(1+df)) + 1
  Raw,       // ln(N/df), 0 when df = 0
};

struct IdfTable {
  std::vector<double> weights;
  std::uint64_t space_fingerprint = 0;
  std::size_t n_docs = 0;
  IdfVariant variant = IdfVariant::Smoothed;
};

inline double idf_weight(std::size_t n_docs, std::size_t df, IdfVariant v) {
  const auto N = static_cast<double>(n_docs);
  const auto f = static_cast<double>(df);
  if (v == IdfVariant::Smoothed) return std::log((1.0 + N) / (1.0 + f)) + 1.0;
  return df == 0 ? 0.0 : std::log(N / f);
}

inline IdfTable fit_idf(const Vocabulary& vocab, IdfVariant variant = IdfVariant::Smoothed) {
  IdfTable t;
  t.space_fingerprint = vocab.fingerprint();
  t.n_docs = vocab.n_docs();
  t.variant = variant;
  t.weights.reserve(vocab.size());
  for (auto df : vocab.doc_freq()) t.weights.push_back(idf_weight(vocab.n_docs(), df, variant));
  return t;
}

/// Document frequencies over count vectors of a fixed feature space.
inline IdfTable fit_idf(std::span<const SparseVector> counts, std::size_t dim, std::uint64_t space_fingerprint,
                        IdfVariant variant = IdfVariant::Smoothed) {
  std::vector<std::size_t> df(dim, 0);
  for (const auto& v : counts) {
    for (auto& e : v.entries) ++df[e.first];
  }
  IdfTable t;
  t.space_fingerprint = space_fingerprint;
  t.n_docs = counts.size();
  t.variant = variant;
  for (auto f : df) t.weights.push_back(idf_weight(counts.size(), f, variant));
  return t;
}

/// Raw n-gram counts over the vocabulary; out-of-vocabulary n-grams dropped.
inline SparseVector count_vector(std::span<const std::string> lemmas, const Vocabulary& vocab) {
  std::map<std::uint32_t, double> m;
  for (const auto& [g, c] : extract_ngrams(lemmas, vocab.orders())) {
    if (auto i = vocab.index_of(g)) m[*i] = static_cast<double>(c);
  }
  return SparseVector::from_map(vocab.size(), m);
}

/// Bool -> 1 per present coordinate; Freq -> counts unchanged;
/// Tfidf -> count x idf, then L2-normalized.
inline SparseVector apply_mode(const SparseVector& counts, BowMode mode, const IdfTable* idf,
                               std::uint64_t space_fingerprint) {
  SparseVector out(counts.dim);
  switch (mode) {
    case BowMode::Bool:
      for (auto& e : counts.entries) out.entries.emplace_back(e.first, 1.0);
      return out;
    case BowMode::Freq:
      return counts;
    case BowMode::Tfidf: {
      if (!idf) throw Error(ErrorCode::IdfMissing, "Tfidf weighting needs a fitted idf table");
      if (idf->space_fingerprint != space_fingerprint || idf->weights.size() != counts.dim)
        throw Error(ErrorCode::VocabMismatch, "idf table was fitted on a different feature space");
      for (auto& e : counts.entries) {
        const double w = e.second * idf->weights[e.first];
        if (w != 0.0) out.entries.emplace_back(e.first, w);
      }
      const double n = out.norm();
      if (n > 0) {
        for (auto& e : out.entries) e.second /= n;
      }
      return out;
    }
  }
  return out;
}

inline SparseVector bow_vector(std::span<const std::string> lemmas, const Vocabulary& vocab, BowMode mode,
                               const IdfTable* idf) {
  if (mode == BowMode::Tfidf && !idf) throw Error(ErrorCode::IdfMissing, "Tfidf weighting needs a fitted idf table");
  return apply_mode(count_vector(lemmas, vocab), mode, idf, vocab.fingerprint());
}

inline SparseVector bow_vector(const ProcessedMessage& pm, const Vocabulary& vocab, BowMode mode,
                               const IdfTable* idf) {
  const auto lemmas = pm.lemmas();
  return bow_vector(std::span<const std::string>(lemmas), vocab, mode, idf);
}

// ---------------------------------------------------------------------------
// POS

/// Fixed coordinate names of the POS space: base tags (or their distinct
/// two-letter prefixes, in first-seen order) followed by the three clause tags.
inline const std::vector<std::string>& pos_space(bool two) {
  static const std::vector<std::string> full = [] {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < kNumTags; ++i) v.emplace_back(kTagNames[i]);
    return v;
  }();
  static const std::vector<std::string> truncated = [] {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < kNumTags; ++i) {
      auto name = two_letter(static_cast<PosTag>(i));
      if (std::find(v.begin(), v.end(), name) == v.end()) v.push_back(name);
    }
    return v;
  }();
  return two ? truncated : full;
}

inline std::uint64_t pos_space_fingerprint(bool two) {
  std::uint64_t h = fnv1a(two ? "pos2" : "pos");
  for (const auto& n : pos_space(two)) h = fnv1a(n + "\n", h);
  return h;
}

inline std::uint32_t pos_index(PosTag t, bool two) {
  const auto& space = pos_space(two);
  const auto name = two ? two_letter(t) : std::string(tag_name(t));
  return static_cast<std::uint32_t>(std::find(space.begin(), space.end(), name) - space.begin());
}

inline SparseVector pos_features(std::span<const PosTag> tags, std::span<const VerbClause> clauses, bool two) {
  std::map<std::uint32_t, double> m;
  for (auto t : tags) m[pos_index(t, two)] += 1.0;
  for (const auto& c : clauses) m[pos_index(c.tag, two)] += 1.0;
  return SparseVector::from_map(pos_space(two).size(), m);
}

inline SparseVector pos_features(const ProcessedMessage& pm, bool two_letter) {
  return pos_features(pm.tags, pm.clauses, two_letter);
}

// ---------------------------------------------------------------------------
// DESC

inline constexpr std::size_t kDescDim = 5;
inline constexpr std::array<std::string_view, kDescDim> kDescNames = {
    "word_count", "likes", "exclamation_count", "question_count", "capital_ratio"};

struct DescFeatures {
  double word_count = 0;
  double likes = 0;
  double exclamation_count = 0;
  double question_count = 0;
  double capital_ratio = 0;

  std::array<double, kDescDim> values() const {
    return {word_count, likes, exclamation_count, question_count, capital_ratio};
  }
  bool operator==(const DescFeatures&) const = default;
};

inline DescFeatures desc_features(const Message& m) {
  DescFeatures d;
  d.word_count = static_cast<double>(split_whitespace(m.text).size());
  d.likes = static_cast<double>(m.likes);
  std::size_t letters = 0, upper = 0;
  for (unsigned char c : m.text) {
    if (c == '!') d.exclamation_count += 1;
    if (c == '?') d.question_count += 1;
    if (std::isalpha(c)) {
      ++letters;
      if (std::isupper(c)) ++upper;
    }
  }
  d.capital_ratio = letters ? static_cast<double>(upper) / static_cast<double>(letters) : 0.0;
  return d;
}

/// Per-feature standardization fitted on training messages. A constant
/// feature keeps unit scale.
struct DescScaler {
  std::array<double, kDescDim> mean{};
  std::array<double, kDescDim> sd{1, 1, 1, 1, 1};

  static DescScaler fit(std::span<const DescFeatures> xs) {
    DescScaler s;
    if (xs.empty()) return s;
    const auto n = static_cast<double>(xs.size());
    for (const auto& x : xs) {
      auto v = x.values();
      for (std::size_t k = 0; k < kDescDim; ++k) s.mean[k] += v[k] / n;
    }
    std::array<double, kDescDim> var{};
    for (const auto& x : xs) {
      auto v = x.values();
      for (std::size_t k = 0; k < kDescDim; ++k) var[k] += (v[k] - s.mean[k]) * (v[k] - s.mean[k]) / n;
    }
    // a constant column leaves rounding noise in var; treat it as zero spread
    for (std::size_t k = 0; k < kDescDim; ++k)
      s.sd[k] = var[k] > 1e-12 * (1.0 + s.mean[k] * s.mean[k]) ? std::sqrt(var[k]) : 1.0;
    return s;
  }

  std::array<double, kDescDim> apply(const DescFeatures& x) const {
    auto v = x.values();
    for (std::size_t k = 0; k < kDescDim; ++k) v[k] = (v[k] - mean[k]) / sd[k];
    return v;
  }
};

inline SparseVector desc_vector(const std::array<double, kDescDim>& v) {
  return SparseVector::from_dense(std::span<const double>(v.data(), v.size()));
}

// ---------------------------------------------------------------------------
// Assembly

using FeaturePart = std::variant<SparseVector, DescFeatures>;

/// Concatenates parts, shifting each part's indices by the preceding widths.
inline SparseVector assemble(std::span<const FeaturePart> parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyParts, "assemble needs at least one part");
  SparseVector out;
  for (const auto& p : parts) {
    const SparseVector v =
        std::holds_alternative<SparseVector>(p) ? std::get<SparseVector>(p) : desc_vector(std::get<DescFeatures>(p).values());
    const auto offset = static_cast<std::uint32_t>(out.dim);
    for (auto [i, x] : v.entries) out.entries.emplace_back(i + offset, x);
    out.dim += v.dim;
  }
  return out;
}

inline SparseVector assemble(std::initializer_list<FeaturePart> parts) {
  return assemble(std::span<const FeaturePart>(parts.begin(), parts.size()));
}

// ---------------------------------------------------------------------------
// Dense embeddings

inline constexpr std::size_t kMaxWords = 100;

/// kMaxWords x width, row-major.
struct EmbeddedMessage {
  std::size_t width = 0;
  std::size_t true_length = 0;
  std::vector<float> data;

  float at(std::size_t row, std::size_t col) const { return data[row * width + col]; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * width, width}; }
};

/// Surface form first, then lower-cased surface, then lemma.
inline std::optional<std::span<const float>> lookup(const EmbeddingTable& table, const Token& t) {
  if (auto v = table.find(t.surface)) return v;
  if (auto v = table.find(to_lower(t.surface))) return v;
  if (!t.lemma.empty()) return table.find(t.lemma);
  return std::nullopt;
}

/// DESC columns, when requested, take the raw values unless a scaler is given.
inline EmbeddedMessage embed_matrix(const ProcessedMessage& pm, const EmbeddingTable& table, bool with_desc,
                                    const DescScaler* scaler = nullptr) {
  if (table.empty()) throw Error(ErrorCode::EmptyEmbeddingTable, "embedding table is empty");
  const std::size_t d = table.dim();
  EmbeddedMessage e;
  e.width = d + (with_desc ? kDescDim : 0);
  e.true_length = std::min(pm.tokens.size(), kMaxWords);
  e.data.assign(kMaxWords * e.width, 0.0f);
  std::array<double, kDescDim> desc{};
  if (with_desc) {
    const auto df = desc_features(pm.source);
    desc = scaler ? scaler->apply(df) : df.values();
  }
  for (std::size_t r = 0; r < e.true_length; ++r) {
    float* row = e.data.data() + r * e.width;
    if (auto v = lookup(table, pm.tokens[r])) std::copy(v->begin(), v->end(), row);
    if (with_desc) {
      for (std::size_t k = 0; k < kDescDim; ++k) row[d + k] = static_cast<float>(desc[k]);
    }
  }
  return e;
}

/// Mean of the vectors of in-table tokens; zero when none is found.
inline std::vector<double> mean_embedding(const ProcessedMessage& pm, const EmbeddingTable& table) {
  std::vector<double> out(table.dim(), 0.0);
  std::size_t found = 0;
  for (const auto& t : pm.tokens) {
    if (auto v = lookup(table, t)) {
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += (*v)[k];
      ++found;
    }
  }
  if (found) {
    for (auto& x : out) x /= static_cast<double>(found);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature matrix dump: "<rows> <dim>" header, then one line of
// space-separated "index:value" pairs per row.

inline std::string dump_features(std::span<const SparseVector> rows) {
  const std::size_t dim = rows.empty() ? 0 : rows.front().dim;
  std::string out = std::to_string(rows.size()) + " " + std::to_string(dim) + "\n";
  for (const auto& r : rows) {
    if (r.dim != dim) throw Error(ErrorCode::DimMismatch, "rows of a feature dump must share one dimension");
    bool first = true;
    for (auto [i, x] : r.entries) {
      if (!first) out += ' ';
      first = false;
      out += std::to_string(i);
      out += ':';
      out += format_double(x);
    }
    out += '\n';
  }
  return out;
}

namespace detail {
inline std::vector<SparseVector> parse_feature_dump_unchecked(std::string_view s) {
  if (s.ends_with('\n')) s.remove_suffix(1);
  auto lines = split(s, '\n');
  if (lines.empty()) throw Error(ErrorCode::FormatError, "empty feature dump", 1);
  auto head = split_whitespace(lines[0]);
  if (head.size() != 2) throw Error(ErrorCode::FormatError, "header must be '<rows> <dim>'", 1);
  const auto rows = std::stoull(head[0]);
  const auto dim = std::stoull(head[1]);
  std::vector<SparseVector> out;
  for (std::size_t r = 0; r < rows; ++r) {
    if (r + 1 >= lines.size()) throw Error(ErrorCode::FormatError, "missing row", r + 2);
    SparseVector v(dim);
    for (const auto& cell : split_whitespace(lines[r + 1])) {
      auto colon = cell.find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::FormatError, "bad cell '" + cell + "'", r + 2);
      v.entries.emplace_back(static_cast<std::uint32_t>(std::stoul(cell.substr(0, colon))),
                             std::stod(cell.substr(colon + 1)));
    }
    if (!v.valid()) throw Error(ErrorCode::FormatError, "row is not a valid sparse vector", r + 2);
    out.push_back(std::move(v));
  }
  return out;
}
}  // namespace detail

inline std::vector<SparseVector> parse_feature_dump(std::string_view s) {
  try {
    return detail::parse_feature_dump_unchecked(s);
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::FormatError, "non-numeric field in feature dump");
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::FormatError, "number out of range in feature dump");
  }
}

// ---------------------------------------------------------------------------
// Featurizer: a fitted combination of the sparse representations.

struct FeatureConfig {
  bool bow = true;
  std::vector<int> orders{1, 2, 3};
  std::size_t min_df = 2;
  BowMode bow_mode = BowMode::Tfidf;
  IdfVariant idf_variant = IdfVariant::Smoothed;

  bool pos = false;
  bool pos_two_letter = false;
  BowMode pos_mode = BowMode::Freq;

  bool desc = false;
  bool desc_standardize = false;

  // mean-pooled word vectors from an external table
  bool embedding = false;
  std::string embedding_name;

  void validate() const {
    if (!bow && !pos && !desc && !embedding) throw Error(ErrorCode::EmptyParts, "feature config selects no part");
    if (bow) validate_orders(orders);
    if (min_df < 1) throw Error(ErrorCode::InvalidConfig, "min_df must be >= 1");
  }
};

inline nlohmann::json to_json(const FeatureConfig& c) {
  return {{"bow", c.bow},
          {"orders", c.orders},
          {"min_df", c.min_df},
          {"bow_mode", std::string(bow_mode_name(c.bow_mode))},
          {"idf_variant", c.idf_variant == IdfVariant::Smoothed ? "smoothed" : "raw"},
          {"pos", c.pos},
          {"pos_two_letter", c.pos_two_letter},
          {"pos_mode", std::string(bow_mode_name(c.pos_mode))},
          {"desc", c.desc},
          {"desc_standardize", c.desc_standardize},
          {"embedding", c.embedding},
          {"embedding_name", c.embedding_name}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig c;
  c.bow = j.value("bow", c.bow);
  if (j.contains("orders")) c.orders = j.at("orders").get<std::vector<int>>();
  c.min_df = j.value("min_df", c.min_df);
  if (j.contains("bow_mode")) c.bow_mode = parse_bow_mode(j.at("bow_mode").get<std::string>());
  if (j.contains("idf_variant"))
    c.idf_variant = j.at("idf_variant").get<std::string>() == "raw" ? IdfVariant::Raw : IdfVariant::Smoothed;
  c.pos = j.value("pos", c.pos);
  c.pos_two_letter = j.value("pos_two_letter", c.pos_two_letter);
  if (j.contains("pos_mode")) c.pos_mode = parse_bow_mode(j.at("pos_mode").get<std::string>());
  c.desc = j.value("desc", c.desc);
  c.desc_standardize = j.value("desc_standardize", c.desc_standardize);
  c.embedding = j.value("embedding", c.embedding);
  c.embedding_name = j.value("embedding_name", c.embedding_name);
  return c;
}

class Featurizer {
 public:
  Featurizer() = default;

  /// Fits vocabulary, idf tables and DESC scaling on training messages only.
  static Featurizer fit(const FeatureConfig& cfg, std::span<const ProcessedMessage> train,
                        std::shared_ptr<const EmbeddingTable> table = nullptr) {
    cfg.validate();
    if (train.empty()) throw Error(ErrorCode::EmptyCorpus, "featurizer needs training messages");
    Featurizer f;
    f.cfg_ = cfg;
    if (cfg.bow) {
      f.vocab_ = build_vocabulary(train, cfg.orders, cfg.min_df);
      f.bow_idf_ = fit_idf(f.vocab_, cfg.idf_variant);
    }
    if (cfg.pos) {
      std::vector<SparseVector> counts;
      for (const auto& pm : train) counts.push_back(pos_features(pm, cfg.pos_two_letter));
      f.pos_idf_ = fit_idf(counts, pos_space(cfg.pos_two_letter).size(), pos_space_fingerprint(cfg.pos_two_letter),
                           cfg.idf_variant);
    }
    if (cfg.desc && cfg.desc_standardize) {
      std::vector<DescFeatures> xs;
      for (const auto& pm : train) xs.push_back(desc_features(pm.source));
      f.scaler_ = DescScaler::fit(xs);
    }
    f.set_embeddings(std::move(table));
    f.build_names();
    return f;
  }

  void set_embeddings(std::shared_ptr<const EmbeddingTable> table) {
    if (cfg_.embedding) {
      if (!table || table->empty()) throw Error(ErrorCode::EmptyEmbeddingTable, "featurizer needs an embedding table");
      if (embedding_dim_ && table->dim() != embedding_dim_)
        throw Error(ErrorCode::DimMismatch, "embedding table dimension differs from the fitted one");
      embedding_dim_ = table->dim();
    }
    table_ = std::move(table);
  }

  SparseVector transform(const ProcessedMessage& pm) const {
    std::vector<FeaturePart> parts;
    if (cfg_.bow) parts.emplace_back(bow_vector(pm, vocab_, cfg_.bow_mode, &bow_idf_));
    if (cfg_.pos) {
      parts.emplace_back(apply_mode(pos_features(pm, cfg_.pos_two_letter), cfg_.pos_mode, &pos_idf_,
                                    pos_space_fingerprint(cfg_.pos_two_letter)));
    }
    if (cfg_.embedding) {
      if (!table_) throw Error(ErrorCode::EmptyEmbeddingTable, "featurizer has no embedding table attached");
      auto m = mean_embedding(pm, *table_);
      parts.emplace_back(SparseVector::from_dense(m));
    }
    if (cfg_.desc) {
      const auto d = desc_features(pm.source);
      if (scaler_) parts.emplace_back(desc_vector(scaler_->apply(d)));
      else parts.emplace_back(d);
    }
    return assemble(parts);
  }

  std::vector<SparseVector> transform(std::span<const ProcessedMessage> pms) const {
    std::vector<SparseVector> out;
    out.reserve(pms.size());
    for (const auto& pm : pms) out.push_back(transform(pm));
    return out;
  }

  std::size_t dim() const { return names_.size(); }
  const std::vector<std::string>& feature_names() const { return names_; }
  const FeatureConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const IdfTable& bow_idf() const { return bow_idf_; }

  /// Identifies the feature space: config, vocabulary and fitted weights.
  std::uint64_t fingerprint() const { return fnv1a(to_json().dump()); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = stagegate::to_json(cfg_);
    if (cfg_.bow) {
      j["vocab"] = {{"n_docs", vocab_.n_docs()}, {"terms", vocab_.terms()}, {"df", vocab_.doc_freq()}};
      j["bow_idf"] = bow_idf_.weights;
    }
    if (cfg_.pos) j["pos_idf"] = pos_idf_.weights;
    if (scaler_) j["desc_scaler"] = {{"mean", scaler_->mean}, {"sd", scaler_->sd}};
    if (cfg_.embedding) j["embedding_dim"] = embedding_dim_;
    return j;
  }

  static Featurizer from_json(const nlohmann::json& j, std::shared_ptr<const EmbeddingTable> table = nullptr) {
    Featurizer f;
    f.cfg_ = feature_config_from_json(j.at("config"));
    f.cfg_.validate();
    if (f.cfg_.bow) {
      const auto& v = j.at("vocab");
      f.vocab_ = Vocabulary::from_parts(f.cfg_.orders, f.cfg_.min_df, v.at("n_docs").get<std::size_t>(),
                                        v.at("terms").get<std::vector<std::string>>(),
                                        v.at("df").get<std::vector<std::size_t>>());
      f.bow_idf_.weights = j.at("bow_idf").get<std::vector<double>>();
      f.bow_idf_.space_fingerprint = f.vocab_.fingerprint();
      f.bow_idf_.n_docs = f.vocab_.n_docs();
      f.bow_idf_.variant = f.cfg_.idf_variant;
      if (f.bow_idf_.weights.size() != f.vocab_.size())
        throw Error(ErrorCode::FormatError, "idf table length differs from vocabulary size");
    }
    if (f.cfg_.pos) {
      f.pos_idf_.weights = j.at("pos_idf").get<std::vector<double>>();
      f.pos_idf_.space_fingerprint = pos_space_fingerprint(f.cfg_.pos_two_letter);
      f.pos_idf_.variant = f.cfg_.idf_variant;
      if (f.pos_idf_.weights.size() != pos_space(f.cfg_.pos_two_letter).size())
        throw Error(ErrorCode::FormatError, "POS idf table has the wrong length");
    }
    if (j.contains("desc_scaler")) {
      DescScaler s;
      s.mean = j.at("desc_scaler").at("mean").get<std::array<double, kDescDim>>();
      s.sd = j.at("desc_scaler").at("sd").get<std::array<double, kDescDim>>();
      f.scaler_ = s;
    }
    if (f.cfg_.embedding) f.embedding_dim_ = j.at("embedding_dim").get<std::size_t>();
    if (table || !f.cfg_.embedding) f.set_embeddings(std::move(table));
    f.build_names();
    return f;
  }

 private:
  void build_names() {
    names_.clear();
    if (cfg_.bow) {
      for (const auto& t : vocab_.terms()) names_.push_back(t);
    }
    if (cfg_.pos) {
      for (const auto& t : pos_space(cfg_.pos_two_letter)) names_.push_back("POS:" + t);
    }
    if (cfg_.embedding) {
      for (std::size_t k = 0; k < embedding_dim_; ++k) names_.push_back("EMB:" + std::to_string(k));
    }
    if (cfg_.desc) {
      for (auto n : kDescNames) names_.push_back("DESC:" + std::string(n));
    }
  }

  FeatureConfig cfg_;
  Vocabulary vocab_;
  IdfTable bow_idf_;
  IdfTable pos_idf_;
  std::optional<DescScaler> scaler_;
  std::shared_ptr<const EmbeddingTable> table_;
  std::size_t embedding_dim_ = 0;
  std::vector<std::string> names_;
};

}  // namespace stagegate
