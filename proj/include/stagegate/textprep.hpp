#pragma once

// Text normalization, tokenization, lemmatization, Penn Treebank tag set and
// auxiliary+verb tense clause detection.

#include <array>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stagegate/corpus.hpp"
#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

// ---------------------------------------------------------------------------
// Normalization
//
// Replacement order is Email, URL, Handle, Phone, Date, Number, then
// day-of-week and month names. Every replacement contains no digits, '@',
// dots or name words, which makes the whole pass idempotent.
//
//   Email      name@host.tld
//   URL        http(s)://..., ftp://..., www...., or a bare host ending in a
//              common TLD (bit.ly/x, city.gov); trailing punctuation excluded
//   Handle     @word
//   Phone      (555) 123-4567, 555-123-4567, 555.123.4567, +1 555 123 4567,
//              123-4567
//   Date       12/31/2017, 12-31-17, 2017-12-31, 12/31
//   Number     any remaining digit run, with inner . or , groups (1,000.5)
//   DayOfWeek  full names and Mon/Tue/Tues/Thu/Thur/Thurs/Fri any case;
//              Wed/Sat/Sun only when capitalized (they are also verbs/nouns)
//   Month      full names and Jan/Feb/Apr/Jun/Jul/Aug/Sep/Sept/Oct/Nov/Dec
//              any case; May and Mar only when capitalized

namespace detail {

struct NormalizeRule {
  std::regex pattern;
  const char* replacement;
};

inline const std::vector<NormalizeRule>& normalize_rules() {
  using std::regex;
  constexpr auto ecma = regex::ECMAScript | regex::optimize;
  constexpr auto icase = ecma | regex::icase;
  static const std::vector<NormalizeRule> rules = {
      {regex(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)+)", ecma), "[Email]"},
      {regex(R"(((https?|ftp)://|www\.)[^\s<>"]*[^\s<>".,;:!?)\]'])", icase), "[URL]"},
      {regex(R"(\b[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*\.(com|org|net|gov|edu|us|info|ly|co|io)\b(/[^\s<>"]*[^\s<>".,;:!?)\]'])?)",
             icase),
       "[URL]"},
      {regex(R"(@[A-Za-z0-9_]+)", ecma), "[Handle]"},
      {regex(R"((\+?1[ .\-]?)?(\(\d{3}\) ?|\b\d{3}[ .\-])\d{3}[ .\-]\d{4}\b|\b\d{3}-\d{4}\b)", ecma), "[Phone]"},
      {regex(R"(\b\d{4}-\d{1,2}-\d{1,2}\b|\b\d{1,2}[/\-.]\d{1,2}[/\-.]\d{2,4}\b|\b\d{1,2}/\d{1,2}\b)", ecma),
       "[Date]"},
      {regex(R"(\d+([.,]\d+)*)", ecma), "[Number]"},
      {regex(R"(\b(monday|tuesday|wednesday|thursday|friday|saturday|sunday|mon|tues?|thu|thurs?|fri)\b)",
             icase),
       "[DayOfWeek]"},
      {regex(R"(\b(Wed|WED|Sat|SAT|Sun|SUN)\b)", ecma), "[DayOfWeek]"},
      {regex(R"(\b(january|february|march|april|june|july|august|september|october|november|december|jan|feb|apr|jun|jul|aug|sept?|oct|nov|dec)\b)",
             icase),
       "[Month]"},
      {regex(R"(\b(May|MAY|Mar|MAR)\b)", ecma), "[Month]"},
  };
  return rules;
}

}  // namespace detail

inline std::string normalize(std::string_view text) {
  std::string out(text);
  for (const auto& rule : detail::normalize_rules()) {
    out = std::regex_replace(out, rule.pattern, rule.replacement);
  }
  return out;
}

inline constexpr std::array<std::string_view, 8> kGenericTerms = {
    "[URL]", "[Email]", "[Handle]", "[Phone]", "[Date]", "[Number]", "[DayOfWeek]", "[Month]"};

inline bool is_generic_term(std::string_view s) {
  return std::find(kGenericTerms.begin(), kGenericTerms.end(), s) != kGenericTerms.end();
}

// ---------------------------------------------------------------------------
// Tokenization

struct Token {
  std::string surface;
  std::string lemma;
  std::size_t position = 0;

  bool operator==(const Token&) const = default;
};

namespace detail {

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80 || c == '_'; }

inline void push_word(std::vector<Token>& out, std::string_view w) {
  auto emit = [&](std::string_view s) {
    if (!s.empty()) out.push_back({std::string(s), {}, out.size()});
  };
  const std::string lw = to_lower(w);
  if (lw.size() > 3 && lw.ends_with("n't")) {
    emit(w.substr(0, w.size() - 3));
    emit(w.substr(w.size() - 3));
    return;
  }
  if (auto p = w.rfind('\''); p != std::string_view::npos && p > 0) {
    const std::string suffix = to_lower(w.substr(p + 1));
    if (suffix == "s" || suffix == "re" || suffix == "ve" || suffix == "ll" || suffix == "d" || suffix == "m") {
      emit(w.substr(0, p));
      emit(w.substr(p));
      return;
    }
  }
  emit(w);
}

}  // namespace detail

/// Tokenization rules:
///  - whitespace separates tokens and is dropped;
///  - a bracketed generic term ([URL], [Number], ...) is one token;
///  - a word is a run of letters/digits/underscore/non-ASCII bytes, with
///    inner hyphens and apostrophes kept when followed by another word byte
///    ("well-known", "o'clock");
///  - contractions split PTB-style: "don't" -> "do" "n't", "can't" -> "ca"
///    "n't", and a trailing 's 're 've 'll 'd 'm becomes its own token;
///  - every other character is a one-character punctuation token.
/// Tokens are exact substrings, so their concatenation equals the input with
/// whitespace removed.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '[') {
      auto close = text.find(']', i);
      if (close != std::string_view::npos && is_generic_term(text.substr(i, close - i + 1))) {
        out.push_back({std::string(text.substr(i, close - i + 1)), {}, out.size()});
        i = close + 1;
        continue;
      }
    }
    if (detail::is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < n) {
        const auto cj = static_cast<unsigned char>(text[j]);
        if (detail::is_word_byte(cj)) {
          ++j;
        } else if ((cj == '-' || cj == '\'') && j + 1 < n &&
                   detail::is_word_byte(static_cast<unsigned char>(text[j + 1]))) {
          j += 2;
        } else {
          break;
        }
      }
      detail::push_word(out, text.substr(i, j - i));
      i = j;
      continue;
    }
    out.push_back({std::string(1, text[i]), {}, out.size()});
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tags

enum class PosTag : std::uint8_t {
  CC, CD, DT, EX, FW, IN, JJ, JJR, JJS, LS, MD, NN, NNS, NNP, NNPS, PDT, POS, PRP, PRPS,
  RB, RBR, RBS, RP, SYM, TO, UH, VB, VBD, VBG, VBN, VBP, VBZ, WDT, WP, WPS, WRB,
  Period, Comma, Colon, OpenQuote, CloseQuote, LRB, RRB, Hash, Dollar,
  // composite clause tags; produced only by detect_verb_clauses
  VerbPast, VerbPresent, VerbFuture,
};

inline constexpr std::size_t kNumBaseTags = static_cast<std::size_t>(PosTag::Dollar) + 1;
inline constexpr std::size_t kNumTags = kNumBaseTags + 3;

inline constexpr std::array<std::string_view, kNumTags> kTagNames = {
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS",
    "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG",
    "VBN", "VBP", "VBZ", "WDT", "WP", "WP$", "WRB", ".", ",", ":", "``", "''", "-LRB-", "-RRB-",
    "#", "$", "VerbPast", "VerbPresent", "VerbFuture"};

inline std::string_view tag_name(PosTag t) { return kTagNames[static_cast<std::size_t>(t)]; }

inline bool is_composite(PosTag t) { return static_cast<std::size_t>(t) >= kNumBaseTags; }

inline std::optional<PosTag> parse_tag(std::string_view s) {
  for (std::size_t i = 0; i < kNumTags; ++i) {
    if (kTagNames[i] == s) return static_cast<PosTag>(i);
  }
  return std::nullopt;
}

/// First two characters of a base tag name ("NNS" -> "NN", "VBZ" -> "VB").
inline std::string two_letter(PosTag t) {
  auto name = tag_name(t);
  return std::string(is_composite(t) ? name : name.substr(0, 2));
}

// ---------------------------------------------------------------------------
// Lemmatization

/// POS-aware suffix stripping with an exception lexicon. Rules by tag:
///  NNS/NNPS  -ies -> -y; -sses/-shes/-ches/-xes/-zzes drop "es"; words
///            ending ss/us/is unchanged; otherwise drop final s
///  VBZ       -ies -> -y; -sses/-shes/-ches/-xes/-zzes/-oes drop "es";
///            otherwise drop final s
///  VBG       drop "ing"; VBD/VBN drop "ed" (-ied -> -y)
///  JJR/RBR   drop "er" (-ier -> -y); JJS/RBS drop "est" (-iest -> -y)
/// After dropping a verb or adjective suffix a doubled final b/d/g/m/n/p/r/t
/// is undoubled ("running" -> "run"); otherwise a silent e is restored when
/// the stem has an e-drop signature (see `needs_final_e`).
/// Output is lowercased; generic terms pass through case-folded.
class Lemmatizer {
 public:
  Lemmatizer() { load_builtin(); }

  /// Adds entries from a TSV file: surface<TAB>tag<TAB>lemma, where tag is a
  /// Penn tag name or "*" for any tag. Later entries override earlier ones.
  void load_lexicon(const std::filesystem::path& path) {
    const auto content = read_file(path);
    std::size_t line_no = 0;
    for (const auto& line : split(content, '\n')) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      if (cols.size() != 3) throw Error(ErrorCode::FormatError, "lexicon needs 3 columns", line_no);
      if (cols[1] != "*" && !parse_tag(cols[1]))
        throw Error(ErrorCode::FormatError, "unknown tag " + cols[1], line_no);
      add(cols[0], cols[1], cols[2]);
    }
  }

  void add(std::string_view surface, std::string_view tag, std::string_view lemma) {
    exceptions_[key(to_lower(surface), tag)] = to_lower(lemma);
  }

  std::string lemmatize(std::string_view surface, PosTag tag) const {
    if (is_generic_term(surface)) return to_lower(surface);
    std::string w = to_lower(surface);
    if (w.empty()) return w;
    if (auto it = exceptions_.find(key(w, tag_name(tag))); it != exceptions_.end()) return it->second;
    if (auto it = exceptions_.find(key(w, "*")); it != exceptions_.end()) return it->second;
    switch (tag) {
      case PosTag::NNS:
      case PosTag::NNPS: return noun_plural(w);
      case PosTag::VBZ: return verb_third_person(w);
      case PosTag::VBG: return strip_suffix(w, "ing", 2);
      case PosTag::VBD:
      case PosTag::VBN:
        if (w.size() > 4 && w.ends_with("ied")) return w.substr(0, w.size() - 3) + "y";
        return strip_suffix(w, "ed", 2);
      case PosTag::JJR:
      case PosTag::RBR:
        if (w.size() > 4 && w.ends_with("ier")) return w.substr(0, w.size() - 3) + "y";
        return strip_suffix(w, "er", 2);
      case PosTag::JJS:
      case PosTag::RBS:
        if (w.size() > 5 && w.ends_with("iest")) return w.substr(0, w.size() - 4) + "y";
        return strip_suffix(w, "est", 2);
      default: return w;
    }
  }

  /// True when a stem left by stripping -ed/-ing/-er/-est most likely lost a
  /// silent e: final v, z (not zz), c; CVC single-syllable stems ("mak",
  /// "clos"); multi-syllable -at/-ut/-ag/-ud/-id ("locat", "provid");
  /// consonant+l, -rg, -dg, -ang, -eng, -ns; consonant+ur/ir/ar; multi-syllable
  /// -let/-pet ("complet"); multi-syllable -uat ("evacuat"); and a vowel pair
  /// before s ("caus", "releas").
  static bool needs_final_e(std::string_view s) {
    const std::size_t n = s.size();
    if (n < 2) return false;
    auto vowel = [](char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; };
    auto consonant = [&](char c) { return std::isalpha(static_cast<unsigned char>(c)) && !vowel(c); };
    std::size_t groups = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (vowel(s[i]) && (i == 0 || !vowel(s[i - 1]))) ++groups;
    }
    const char last = s[n - 1];
    const char prev = s[n - 2];
    if (last == 'v' || last == 'c') return true;
    if (last == 'z') return prev != 'z';
    if (last == 'l' && std::string_view("bptdgkcfz").find(prev) != std::string_view::npos) return true;
    if (s.ends_with("rg") || s.ends_with("dg") || s.ends_with("ns")) return true;
    if (n >= 3 && (s.ends_with("ang") || s.ends_with("eng"))) return true;
    if (last == 's' && n >= 3 && vowel(prev) && vowel(s[n - 3])) return true;
    if (n >= 3 && consonant(s[n - 3]) &&
        (s.ends_with("ur") || s.ends_with("ir") || (s.ends_with("ar") && groups >= 2)))
      return true;
    if (groups >= 2 && n >= 3 && consonant(s[n - 3]) &&
        (s.ends_with("at") || s.ends_with("ut") || s.ends_with("ag") || s.ends_with("ud") ||
         s.ends_with("id") || s.ends_with("let") || s.ends_with("pet")))
      return true;
    if (groups >= 2 && s.ends_with("uat")) return true;
    if (groups == 1 && n >= 3 && consonant(s[n - 3]) && vowel(prev) && consonant(last) &&
        std::string_view("wxy").find(last) == std::string_view::npos)
      return true;
    return false;
  }

 private:
  static std::string key(std::string_view w, std::string_view tag) {
    std::string k(w);
    k += '\t';
    k += tag;
    return k;
  }

  static std::string noun_plural(const std::string& w) {
    const std::size_t n = w.size();
    if (n > 4 && w.ends_with("ies")) return w.substr(0, n - 3) + "y";
    for (std::string_view suf : {"sses", "shes", "ches", "xes", "zzes"}) {
      if (n > suf.size() && w.ends_with(suf)) return w.substr(0, n - 2);
    }
    if (w.ends_with("ss") || w.ends_with("us") || w.ends_with("is")) return w;
    if (n > 2 && w.back() == 's') return w.substr(0, n - 1);
    return w;
  }

  static std::string verb_third_person(const std::string& w) {
    const std::size_t n = w.size();
    if (n > 4 && w.ends_with("ies")) return w.substr(0, n - 3) + "y";
    for (std::string_view suf : {"sses", "shes", "ches", "xes", "zzes", "oes"}) {
      if (n > suf.size() && w.ends_with(suf)) return w.substr(0, n - 2);
    }
    if (n > 2 && w.back() == 's' && !w.ends_with("ss")) return w.substr(0, n - 1);
    return w;
  }

  static std::string strip_suffix(const std::string& w, std::string_view suffix, std::size_t min_stem) {
    if (w.size() < suffix.size() + min_stem || !w.ends_with(suffix)) return w;
    std::string stem = w.substr(0, w.size() - suffix.size());
    const std::size_t n = stem.size();
    if (n >= 3 && stem[n - 1] == stem[n - 2] &&
        std::string_view("bdgmnprt").find(stem[n - 1]) != std::string_view::npos)
      return stem.substr(0, n - 1);
    if (suffix == "ed" && stem.back() == 'e') return stem + "e";  // agreed, freed
    if (stem.back() == 'e' || stem.back() == 'y') return stem;
    if (needs_final_e(stem)) return stem + "e";
    return stem;
  }

  void load_builtin();

  std::unordered_map<std::string, std::string> exceptions_;
};

inline void Lemmatizer::load_builtin() {
  // base, past, past participle
  static constexpr const char* kIrregularVerbs[][3] = {
      {"be", "was", "been"},        {"be", "were", "been"},         {"have", "had", "had"},
      {"do", "did", "done"},        {"go", "went", "gone"},         {"make", "made", "made"},
      {"take", "took", "taken"},    {"get", "got", "gotten"},       {"say", "said", "said"},
      {"see", "saw", "seen"},       {"come", "came", "come"},       {"find", "found", "found"},
      {"leave", "left", "left"},    {"hold", "held", "held"},       {"run", "ran", "run"},
      {"know", "knew", "known"},    {"give", "gave", "given"},      {"think", "thought", "thought"},
      {"tell", "told", "told"},     {"become", "became", "become"}, {"bring", "brought", "brought"},
      {"catch", "caught", "caught"}, {"fall", "fell", "fallen"},    {"steal", "stole", "stolen"},
      {"shoot", "shot", "shot"},    {"hit", "hit", "hit"},          {"put", "put", "put"},
      {"set", "set", "set"},        {"keep", "kept", "kept"},       {"lose", "lost", "lost"},
      {"send", "sent", "sent"},     {"spend", "spent", "spent"},    {"build", "built", "built"},
      {"buy", "bought", "bought"},  {"pay", "paid", "paid"},        {"meet", "met", "met"},
      {"lead", "led", "led"},       {"feel", "felt", "felt"},       {"begin", "began", "begun"},
      {"break", "broke", "broken"}, {"choose", "chose", "chosen"},  {"drive", "drove", "driven"},
      {"eat", "ate", "eaten"},      {"fly", "flew", "flown"},       {"forget", "forgot", "forgotten"},
      {"freeze", "froze", "frozen"}, {"grow", "grew", "grown"},     {"hide", "hid", "hidden"},
      {"ride", "rode", "ridden"},   {"ring", "rang", "rung"},       {"rise", "rose", "risen"},
      {"shake", "shook", "shaken"}, {"sing", "sang", "sung"},       {"speak", "spoke", "spoken"},
      {"swim", "swam", "swum"},     {"throw", "threw", "thrown"},   {"wake", "woke", "woken"},
      {"wear", "wore", "worn"},     {"write", "wrote", "written"},  {"stand", "stood", "stood"},
      {"understand", "understood", "understood"}, {"sit", "sat", "sat"}, {"win", "won", "won"},
      {"fight", "fought", "fought"}, {"flee", "fled", "fled"},      {"feed", "fed", "fed"},
      {"hear", "heard", "heard"},   {"hurt", "hurt", "hurt"},       {"let", "let", "let"},
      {"light", "lit", "lit"},      {"mean", "meant", "meant"},     {"read", "read", "read"},
      {"sell", "sold", "sold"},     {"shut", "shut", "shut"},       {"sleep", "slept", "slept"},
      {"strike", "struck", "struck"}, {"teach", "taught", "taught"}, {"tear", "tore", "torn"},
      {"seek", "sought", "sought"}, {"bite", "bit", "bitten"},      {"blow", "blew", "blown"},
      {"draw", "drew", "drawn"},    {"cut", "cut", "cut"},          {"quit", "quit", "quit"},
      {"lie", "lay", "lain"},       {"dig", "dug", "dug"},
  };
  for (const auto& [base, past, participle] : kIrregularVerbs) {
    add(past, "VBD", base);
    add(participle, "VBN", base);
    add(past, "VBN", base);
  }
  static constexpr const char* kWordTag[][3] = {
      {"is", "VBZ", "be"},   {"am", "VBP", "be"},     {"are", "VBP", "be"},   {"'s", "VBZ", "be"},
      {"'re", "VBP", "be"},  {"'m", "VBP", "be"},     {"'ve", "VBP", "have"}, {"'ve", "VB", "have"},
      {"'ll", "MD", "will"}, {"'d", "MD", "would"},   {"'d", "VBD", "have"},  {"n't", "RB", "not"},
      {"ca", "MD", "can"},   {"wo", "MD", "will"},    {"sha", "MD", "shall"}, {"has", "VBZ", "have"},
      {"does", "VBZ", "do"}, {"goes", "VBZ", "go"},   {"being", "VBG", "be"}, {"using", "VBG", "use"},
      {"used", "VBD", "use"}, {"used", "VBN", "use"}, {"dying", "VBG", "die"}, {"lying", "VBG", "lie"},
      {"tying", "VBG", "tie"}, {"better", "JJR", "good"}, {"best", "JJS", "good"},
      {"worse", "JJR", "bad"}, {"worst", "JJS", "bad"}, {"better", "RBR", "well"},
      {"best", "RBS", "well"}, {"more", "JJR", "more"}, {"most", "JJS", "most"},
      {"less", "JJR", "less"}, {"least", "JJS", "least"}, {"further", "JJR", "further"},
      {"men", "NNS", "man"}, {"women", "NNS", "woman"}, {"children", "NNS", "child"},
      {"feet", "NNS", "foot"}, {"teeth", "NNS", "tooth"}, {"mice", "NNS", "mouse"},
      {"lives", "NNS", "life"}, {"knives", "NNS", "knife"}, {"wives", "NNS", "wife"},
      {"thieves", "NNS", "thief"}, {"leaves", "NNS", "leaf"}, {"news", "NN", "news"},
      {"buses", "NNS", "bus"}, {"gases", "NNS", "gas"}, {"viruses", "NNS", "virus"},
  };
  for (const auto& [w, t, l] : kWordTag) add(w, t, l);
  for (const char* w : {"news", "series", "species", "police", "people"}) add(w, "NNS", w);
}

// ---------------------------------------------------------------------------
// Composite verb clauses

struct VerbClause {
  std::size_t begin = 0;  // first token index
  std::size_t end = 0;    // one past the last token
  PosTag tag = PosTag::VerbPast;

  bool operator==(const VerbClause&) const = default;
};

/// Auxiliary+verb patterns, matched on lowercased surfaces left to right,
/// leftmost-longest, non-overlapping:
///   {has, have, had, 've} + VBN                      -> VerbPast
///   {is, are, am, was, were, 's, 're, 'm} + VBG      -> VerbPresent
///   {will, shall, 'll} (+ be)? + {VB, VBG}           -> VerbFuture
inline std::vector<VerbClause> detect_verb_clauses(std::span<const Token> tokens, std::span<const PosTag> tags) {
  if (tokens.size() != tags.size())
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(tokens.size()) + " tokens vs " + std::to_string(tags.size()) + " tags");
  auto in = [](const std::string& w, std::initializer_list<std::string_view> set) {
    return std::find(set.begin(), set.end(), w) != set.end();
  };
  std::vector<VerbClause> out;
  const std::size_t n = tokens.size();
  std::size_t i = 0;
  while (i < n) {
    const std::string w = to_lower(tokens[i].surface);
    if (i + 1 < n) {
      if (in(w, {"has", "have", "had", "'ve"}) && tags[i + 1] == PosTag::VBN) {
        out.push_back({i, i + 2, PosTag::VerbPast});
        i += 2;
        continue;
      }
      if (in(w, {"is", "are", "am", "was", "were", "'s", "'re", "'m"}) && tags[i + 1] == PosTag::VBG) {
        out.push_back({i, i + 2, PosTag::VerbPresent});
        i += 2;
        continue;
      }
      if (in(w, {"will", "shall", "'ll"})) {
        auto verb = [](PosTag t) { return t == PosTag::VB || t == PosTag::VBG; };
        if (i + 2 < n && to_lower(tokens[i + 1].surface) == "be" && verb(tags[i + 2])) {
          out.push_back({i, i + 3, PosTag::VerbFuture});
          i += 3;
          continue;
        }
        if (verb(tags[i + 1])) {
          out.push_back({i, i + 2, PosTag::VerbFuture});
          i += 2;
          continue;
        }
      }
    }
    ++i;
  }
  return out;
}

}  // namespace stagegate
