#pragma once

// Greedy averaged-perceptron part-of-speech tagger over the Penn Treebank
// base tag set.
//
// Model file layout (text, UTF-8, one record per line):
//
//   stagegate-tagger 1
//   tags <T> <tag_1> ... <tag_T>
//   tagdict <D>
//   <word>\t<tag>                      (D lines)
//   features <F>
//   <feature>\t<i>:<w> <i>:<w> ...     (F lines, i indexes the tags line)
//
// Training corpus: one sentence per line, whitespace-separated "token/TAG"
// pairs; the tag is everything after the last '/'.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "stagegate/error.hpp"
#include "stagegate/textprep.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<PosTag> tags;
};

inline std::vector<TaggedSentence> parse_tagged_corpus(std::string_view content) {
  std::vector<TaggedSentence> out;
  std::size_t line_no = 0;
  for (const auto& line : split(content, '\n')) {
    ++line_no;
    auto pairs = split_whitespace(line);
    if (pairs.empty()) continue;
    TaggedSentence s;
    for (const auto& p : pairs) {
      auto slash = p.rfind('/');
      if (slash == std::string::npos || slash == 0 || slash + 1 == p.size())
        throw Error(ErrorCode::FormatError, "expected token/TAG, got '" + p + "'", line_no);
      auto tag = parse_tag(p.substr(slash + 1));
      if (!tag || is_composite(*tag))
        throw Error(ErrorCode::FormatError, "unknown tag in '" + p + "'", line_no);
      s.words.push_back(p.substr(0, slash));
      s.tags.push_back(*tag);
    }
    out.push_back(std::move(s));
  }
  return out;
}

class PerceptronTagger {
 public:
  struct TrainOptions {
    int iterations = 8;
    std::uint64_t seed = 1;
    // words seen at least this often with one tag in >= tagdict_ratio of
    // cases bypass the model
    std::size_t tagdict_min_count = 20;
    double tagdict_ratio = 0.97;
  };

  bool loaded() const { return !weights_.empty(); }

  std::vector<PosTag> tag(std::span<const std::string> words) const {
    if (!loaded()) throw Error(ErrorCode::TaggerModelMissing, "no tagger model loaded");
    std::vector<PosTag> out;
    out.reserve(words.size());
    const auto context = make_context(words);
    std::string prev = "-START-", prev2 = "-START2-";
    std::vector<std::string> feats;
    for (std::size_t i = 0; i < words.size(); ++i) {
      PosTag t;
      if (auto it = tagdict_.find(words[i]); it != tagdict_.end()) {
        t = it->second;
      } else {
        features(i, words[i], context, prev, prev2, feats);
        t = predict(feats);
      }
      out.push_back(t);
      prev2 = std::move(prev);
      prev = std::string(tag_name(t));
    }
    return out;
  }

  std::vector<PosTag> tag(std::span<const Token> tokens) const {
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (const auto& t : tokens) words.push_back(t.surface);
    return tag(std::span<const std::string>(words));
  }

  void train(const std::vector<TaggedSentence>& sentences, const TrainOptions& opt) {
    if (sentences.empty()) throw Error(ErrorCode::EmptyCorpus, "no tagged sentences");
    build_tagdict(sentences, opt);
    weights_.clear();
    std::unordered_map<std::string, std::array<double, kNumBaseTags>> totals;
    std::unordered_map<std::string, std::array<std::int64_t, kNumBaseTags>> stamps;
    std::int64_t instances = 0;

    auto update = [&](const std::string& f, std::size_t cls, double delta) {
      auto& w = weights_[f];
      auto& tot = totals[f];
      auto& ts = stamps[f];
      tot[cls] += static_cast<double>(instances - ts[cls]) * w[cls];
      ts[cls] = instances;
      w[cls] += static_cast<float>(delta);
    };

    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(opt.seed);
    std::vector<std::string> feats;
    for (int it = 0; it < opt.iterations; ++it) {
      for (auto si : order) {
        const auto& s = sentences[si];
        const auto context = make_context(s.words);
        std::string prev = "-START-", prev2 = "-START2-";
        for (std::size_t i = 0; i < s.words.size(); ++i) {
          PosTag guess;
          if (auto d = tagdict_.find(s.words[i]); d != tagdict_.end()) {
            guess = d->second;
          } else {
            features(i, s.words[i], context, prev, prev2, feats);
            guess = predict(feats);
            const PosTag truth = s.tags[i];
            if (guess != truth) {
              for (const auto& f : feats) {
                update(f, static_cast<std::size_t>(truth), 1.0);
                update(f, static_cast<std::size_t>(guess), -1.0);
              }
            }
            ++instances;
          }
          prev2 = std::move(prev);
          prev = std::string(tag_name(guess));
        }
      }
      rng.shuffle(order);
    }
    // average
    for (auto& [f, w] : weights_) {
      auto& tot = totals[f];
      auto& ts = stamps[f];
      for (std::size_t c = 0; c < kNumBaseTags; ++c) {
        tot[c] += static_cast<double>(instances - ts[c]) * w[c];
        w[c] = instances ? static_cast<float>(tot[c] / static_cast<double>(instances)) : 0.0f;
      }
    }
    std::erase_if(weights_, [](const auto& kv) {
      return std::all_of(kv.second.begin(), kv.second.end(), [](float x) { return x == 0.0f; });
    });
  }

  std::string serialize() const {
    std::ostringstream os;
    os << "stagegate-tagger 1\n";
    os << "tags " << kNumBaseTags;
    for (std::size_t i = 0; i < kNumBaseTags; ++i) os << ' ' << kTagNames[i];
    os << '\n';
    std::map<std::string, PosTag> dict(tagdict_.begin(), tagdict_.end());
    os << "tagdict " << dict.size() << '\n';
    for (const auto& [w, t] : dict) os << w << '\t' << tag_name(t) << '\n';
    std::map<std::string, std::array<float, kNumBaseTags>> sorted(weights_.begin(), weights_.end());
    os << "features " << sorted.size() << '\n';
    for (const auto& [f, w] : sorted) {
      os << f << '\t';
      bool first = true;
      for (std::size_t c = 0; c < kNumBaseTags; ++c) {
        if (w[c] == 0.0f) continue;
        if (!first) os << ' ';
        first = false;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%zu:%.9g", c, static_cast<double>(w[c]));
        os << buf;
      }
      os << '\n';
    }
    return os.str();
  }

  static PerceptronTagger deserialize(std::string_view content) {
    PerceptronTagger t;
    auto lines = split(content, '\n');
    std::size_t ln = 0;
    auto next = [&]() -> const std::string& {
      if (ln >= lines.size()) throw Error(ErrorCode::FormatError, "truncated tagger model", ln);
      return lines[ln++];
    };
    if (next() != "stagegate-tagger 1") throw Error(ErrorCode::FormatError, "bad tagger header", 1);
    auto tags_line = split_whitespace(next());
    if (tags_line.size() < 2 || tags_line[0] != "tags")
      throw Error(ErrorCode::FormatError, "expected tags line", ln);
    std::vector<PosTag> tag_map;
    for (std::size_t i = 2; i < tags_line.size(); ++i) {
      auto tg = parse_tag(tags_line[i]);
      if (!tg) throw Error(ErrorCode::FormatError, "unknown tag " + tags_line[i], ln);
      tag_map.push_back(*tg);
    }
    auto dict_line = split_whitespace(next());
    if (dict_line.size() != 2 || dict_line[0] != "tagdict")
      throw Error(ErrorCode::FormatError, "expected tagdict line", ln);
    const auto nd = std::stoul(dict_line[1]);
    for (std::size_t i = 0; i < nd; ++i) {
      auto cols = split(next(), '\t');
      auto tg = cols.size() == 2 ? parse_tag(cols[1]) : std::nullopt;
      if (!tg) throw Error(ErrorCode::FormatError, "bad tagdict entry", ln);
      t.tagdict_[cols[0]] = *tg;
    }
    auto feat_line = split_whitespace(next());
    if (feat_line.size() != 2 || feat_line[0] != "features")
      throw Error(ErrorCode::FormatError, "expected features line", ln);
    const auto nf = std::stoul(feat_line[1]);
    for (std::size_t i = 0; i < nf; ++i) {
      const auto& line = next();
      auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw Error(ErrorCode::FormatError, "bad feature line", ln);
      std::array<float, kNumBaseTags> w{};
      for (const auto& cell : split_whitespace(std::string_view(line).substr(tab + 1))) {
        auto colon = cell.find(':');
        if (colon == std::string::npos) throw Error(ErrorCode::FormatError, "bad weight cell", ln);
        const auto idx = std::stoul(cell.substr(0, colon));
        if (idx >= tag_map.size()) throw Error(ErrorCode::FormatError, "tag index out of range", ln);
        w[static_cast<std::size_t>(tag_map[idx])] = std::stof(cell.substr(colon + 1));
      }
      t.weights_[line.substr(0, tab)] = w;
    }
    return t;
  }

  static PerceptronTagger load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
      throw Error(ErrorCode::TaggerModelMissing, "tagger model not found: " + path.string());
    return deserialize(read_file(path));
  }

  void save(const std::filesystem::path& path) const { atomic_write(path, serialize()); }

  /// Path of the small bundled model (trained from data/tagger/ptb-sample.txt).
  static std::filesystem::path bundled_model_path() {
#ifdef STAGEGATE_DATA_DIR
    return std::filesystem::path(STAGEGATE_DATA_DIR) / "tagger" / "ptb-small.model";
#else
    return "data/tagger/ptb-small.model";
#endif
  }

 private:
  static std::string normalize_word(const std::string& w) {
    if (is_generic_term(w)) return w;
    if (w.find('-') != std::string::npos && w.front() != '-') return "!HYPHEN";
    if (w.size() == 4 && std::all_of(w.begin(), w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      return "!YEAR";
    if (!w.empty() && std::isdigit(static_cast<unsigned char>(w.front()))) return "!DIGITS";
    return to_lower(w);
  }

  static std::vector<std::string> make_context(std::span<const std::string> words) {
    std::vector<std::string> ctx;
    ctx.reserve(words.size() + 4);
    ctx.emplace_back("-START-");
    ctx.emplace_back("-START2-");
    for (const auto& w : words) ctx.push_back(normalize_word(w));
    ctx.emplace_back("-END-");
    ctx.emplace_back("-END2-");
    return ctx;
  }

  static std::string suffix(const std::string& s, std::size_t n) {
    return s.size() <= n ? s : s.substr(s.size() - n);
  }

  static void features(std::size_t i, const std::string& raw, const std::vector<std::string>& ctx,
                       const std::string& prev, const std::string& prev2, std::vector<std::string>& out) {
    out.clear();
    const std::size_t c = i + 2;
    const std::string& word = ctx[c];
    out.emplace_back("bias");
    out.push_back("i suffix " + suffix(word, 3));
    out.push_back("i suffix2 " + suffix(word, 2));
    out.push_back("i pref1 " + word.substr(0, 1));
    out.push_back("i-1 tag " + prev);
    out.push_back("i-2 tag " + prev2);
    out.push_back("i tag+i-2 tag " + prev + ' ' + prev2);
    out.push_back("i word " + word);
    out.push_back("i-1 tag+i word " + prev + ' ' + word);
    out.push_back("i-1 word " + ctx[c - 1]);
    out.push_back("i-1 suffix " + suffix(ctx[c - 1], 3));
    out.push_back("i-2 word " + ctx[c - 2]);
    out.push_back("i+1 word " + ctx[c + 1]);
    out.push_back("i+1 suffix " + suffix(ctx[c + 1], 3));
    out.push_back("i+2 word " + ctx[c + 2]);
    if (!raw.empty() && std::isupper(static_cast<unsigned char>(raw.front())))
      out.push_back(i == 0 ? "i shape Cap-first" : "i shape Cap");
  }

  PosTag predict(const std::vector<std::string>& feats) const {
    std::array<double, kNumBaseTags> scores{};
    for (const auto& f : feats) {
      auto it = weights_.find(f);
      if (it == weights_.end()) continue;
      for (std::size_t k = 0; k < kNumBaseTags; ++k) scores[k] += it->second[k];
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumBaseTags; ++k) {
      if (scores[k] > scores[best]) best = k;
    }
    return static_cast<PosTag>(best);
  }

  void build_tagdict(const std::vector<TaggedSentence>& sentences, const TrainOptions& opt) {
    std::unordered_map<std::string, std::array<std::size_t, kNumBaseTags>> counts;
    for (const auto& s : sentences) {
      for (std::size_t i = 0; i < s.words.size(); ++i) ++counts[s.words[i]][static_cast<std::size_t>(s.tags[i])];
    }
    tagdict_.clear();
    for (const auto& [w, c] : counts) {
      std::size_t total = 0, best = 0;
      for (std::size_t k = 0; k < kNumBaseTags; ++k) {
        total += c[k];
        if (c[k] > c[best]) best = k;
      }
      if (total >= opt.tagdict_min_count &&
          static_cast<double>(c[best]) / static_cast<double>(total) >= opt.tagdict_ratio)
        tagdict_[w] = static_cast<PosTag>(best);
    }
  }

  std::unordered_map<std::string, std::array<float, kNumBaseTags>> weights_;
  std::unordered_map<std::string, PosTag> tagdict_;
};

}  // namespace stagegate
