#pragma once

// Synthetic labeled messages with class-specific keyword vocabularies, plus a
// small co-occurrence corpus for embedding checks.

#include <array>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <string>
#include <vector>

#include "stagegate/corpus.hpp"
#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

inline constexpr std::size_t kSynthKeywords = 30;

// Keywords avoid inflectional endings (-s, -ed, -ing, -er, -est) so the
// lemmatizer leaves them intact.
inline const std::array<std::array<const char*, kSynthKeywords>, kNumClasses>& synth_keywords() {
  static const std::array<std::array<const char*, kSynthKeywords>, kNumClasses> kw = {{
      {"forecast", "sandbag", "stockpile", "kit", "flashlight", "battery", "generator", "radio", "prepare", "ready",
       "drill", "tarp", "candle", "bottle", "fuel", "plywood", "hatch", "checklist", "route", "advisory", "outlook",
       "inventory", "pantry", "insurance", "backup", "map", "whistle", "bandage", "ration", "precaution"},
      {"rescue", "flood", "siren", "evacuation", "ambulance", "paramedic", "urgent", "emergency", "collapse", "debris",
       "injury", "casualty", "boat", "smoke", "blaze", "wildfire", "outage", "roof", "lifeboat", "mayday", "dispatch",
       "triage", "hazmat", "medic", "torrent", "landslide", "ablaze", "escape", "victim", "tornado"},
      {"cleanup", "rebuild", "recovery", "donate", "aid", "relief", "restore", "claim", "repair", "fundraise", "grant",
       "reconstruct", "rehab", "counsel", "mold", "drywall", "restoration", "charity", "donation", "reopen",
       "aftermath", "salvage", "memorial", "grief", "assessment", "permit", "refund", "contractor", "tribute", "heal"},
      {"anniversary", "concert", "festival", "brunch", "parade", "picnic", "holiday", "birthday", "coffee", "yoga",
       "marathon", "movie", "trivia", "karaoke", "bingo", "art", "museum", "library", "garden", "bake", "craft",
       "recital", "theatre", "comedy", "potluck", "gala", "raffle", "puppy", "sunset", "carnival"},
  }};
  return kw;
}

inline const std::vector<std::string>& synth_filler() {
  static const std::vector<std::string> words = {
      "the",     "a",       "to",       "of",      "and",     "in",       "on",      "for",     "with",   "our",
      "we",      "you",     "please",   "today",   "tomorrow", "this",    "that",    "city",    "county", "town",
      "community", "people", "residents", "stay",   "check",   "see",      "update",  "info",    "more",   "about",
      "near",    "area",    "local",    "team",    "thank",   "all",      "here",    "now",     "will",   "be",
      "is",      "are",     "have",     "has",     "been",    "at",       "from",    "by",      "time",   "day",
      "week",    "street",  "park",     "center",  "school",  "road",     "water",   "power",   "family", "home",
      "help",    "need",    "keep",     "go",      "get",     "know",     "new",     "good",    "safe",   "great",
      "morning", "evening", "night",    "state",   "police",  "fire",     "department", "office", "public", "service",
      "event",   "news",    "share",    "visit",   "call",    "open",     "join",    "free",    "everyone", "friends",
      "neighbors", "north", "south",    "east",    "west",    "downtown", "weekend", "monday",  "friday", "hour",
      "plenty",  "information", "link", "below",   "above",   "up",       "out",     "it",      "they",   "their",
      "there",   "some",    "any",      "many",    "very",    "just",     "also",    "still",   "again",  "soon",
      "continue", "look",   "find",     "bring",   "take",    "come",     "make",    "remember", "around", "after",
      "before",  "during",  "while",    "if",      "when",    "where",    "what",    "who",     "how",    "your"};
  return words;
}

struct SynthConfig {
  std::size_t n = 2000;
  std::uint64_t seed = 7;
  std::string split_name = "train";  // appears in ids
  double keyword_rate = 0.15;
  std::size_t min_words = 5;
  std::size_t max_words = 80;
  double noise = 0.0;  // probability of replacing the label by another class
  std::array<double, kNumClasses> priors = {573, 364, 931, 1627};

  void validate() const {
    if (min_words == 0 || min_words > max_words) throw Error(ErrorCode::InvalidConfig, "bad synth length range");
    if (keyword_rate < 0 || keyword_rate > 1) throw Error(ErrorCode::InvalidConfig, "keyword rate outside [0,1]");
    if (noise < 0 || noise > 1) throw Error(ErrorCode::InvalidConfig, "noise outside [0,1]");
    double s = 0;
    for (double p : priors) {
      if (p < 0) throw Error(ErrorCode::InvalidConfig, "negative class prior");
      s += p;
    }
    if (s <= 0) throw Error(ErrorCode::InvalidConfig, "class priors sum to zero");
  }
};

namespace detail {
inline std::size_t sample_class(Rng& rng, const std::array<double, kNumClasses>& priors) {
  double total = 0;
  for (double p : priors) total += p;
  double u = rng.uniform() * total;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (u < priors[c]) return c;
    u -= priors[c];
  }
  return kNumClasses - 1;
}

inline std::string upper_ascii(std::string s) {
  for (auto& ch : s)
    if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
  return s;
}
}  // namespace detail

/// Every message carries at least one keyword of its true class. Style cues
/// (likes, '!', '?', all-caps words) differ by class but overlap.
inline Dataset synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synth/" + cfg.split_name));
  const auto& kw = synth_keywords();
  const auto& filler = synth_filler();
  static constexpr std::array<double, kNumClasses> kBang = {0.2, 0.7, 0.2, 0.4};
  static constexpr std::array<double, kNumClasses> kQuestion = {0.3, 0.1, 0.2, 0.15};
  static constexpr std::array<double, kNumClasses> kCaps = {0.05, 0.3, 0.05, 0.05};
  static constexpr std::array<double, kNumClasses> kLikes = {8, 15, 10, 25};

  Dataset d({}, Provenance{"synth:" + cfg.split_name, ""});
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const std::size_t cls = detail::sample_class(rng, cfg.priors);
    const std::size_t len = cfg.min_words + rng.below(cfg.max_words - cfg.min_words + 1);
    std::vector<std::string> words(len);
    bool has_kw = false;
    for (auto& w : words) {
      if (rng.uniform() < cfg.keyword_rate) {
        w = kw[cls][rng.below(kSynthKeywords)];
        has_kw = true;
      } else {
        w = filler[rng.below(filler.size())];
      }
    }
    if (!has_kw) words[rng.below(len)] = kw[cls][rng.below(kSynthKeywords)];
    if (rng.uniform() < kCaps[cls]) {
      auto& w = words[rng.below(len)];
      w = detail::upper_ascii(w);
    }
    words[0][0] = static_cast<char>(std::toupper(static_cast<unsigned char>(words[0][0])));

    std::string text;
    for (std::size_t k = 0; k < len; ++k) {
      if (k) text += (k % 12 == 0) ? ". " : " ";
      text += words[k];
    }
    if (rng.uniform() < kBang[cls]) text += "!";
    else if (rng.uniform() < kQuestion[cls]) text += "?";
    else text += ".";

    Message m;
    char id[64];
    std::snprintf(id, sizeof id, "syn-%s-%06zu", cfg.split_name.c_str(), i + 1);
    m.id = id;
    m.text = std::move(text);
    m.likes = static_cast<std::int64_t>(rng.uniform() * 2.0 * kLikes[cls]);
    std::size_t label = cls;
    if (cfg.noise > 0 && rng.uniform() < cfg.noise) label = (cls + 1 + rng.below(kNumClasses - 1)) % kNumClasses;
    m.label = label_from_index(label);
    d.add(std::move(m));
  }
  return d;
}

/// Sentences built from disjoint word groups: words within a group co-occur,
/// words from different groups never share a sentence.
struct CooccurrenceCorpus {
  std::vector<std::vector<std::string>> groups;
  std::vector<std::vector<std::string>> sentences;
};

inline CooccurrenceCorpus cooccurrence_corpus(std::uint64_t seed, std::size_t n_groups = 10, std::size_t group_size = 8,
                                              std::size_t n_sentences = 4000, std::size_t sentence_len = 10) {
  if (n_groups < 2 || group_size < 2 || sentence_len < 2) throw Error(ErrorCode::InvalidConfig, "corpus too small");
  CooccurrenceCorpus c;
  Rng rng(derive_seed(seed, "cooccurrence"));
  for (std::size_t g = 0; g < n_groups; ++g) {
    std::vector<std::string> group;
    for (std::size_t k = 0; k < group_size; ++k) group.push_back("g" + std::to_string(g) + "w" + std::to_string(k));
    c.groups.push_back(std::move(group));
  }
  for (std::size_t s = 0; s < n_sentences; ++s) {
    const auto& group = c.groups[rng.below(n_groups)];
    std::vector<std::string> sent;
    for (std::size_t k = 0; k < sentence_len; ++k) sent.push_back(group[rng.below(group_size)]);
    c.sentences.push_back(std::move(sent));
  }
  return c;
}

}  // namespace stagegate
