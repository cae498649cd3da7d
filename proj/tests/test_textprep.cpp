#include <gtest/gtest.h>

#include "stagegate/preprocess.hpp"
#include "stagegate/tagger.hpp"
#include "stagegate/textprep.hpp"
#include "support.hpp"

using namespace stagegate;
using stagegate::testing::bundled_preprocessor;
using stagegate::testing::msg;
using stagegate::testing::TempDir;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.surface);
  return out;
}

std::vector<std::string> tag_names(const std::vector<PosTag>& ts) {
  std::vector<std::string> out;
  for (auto t : ts) out.emplace_back(tag_name(t));
  return out;
}

std::string strip_ws(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

}  // namespace

TEST(Normalize, SpecExamples) {
  EXPECT_EQ(normalize("Call 555-123-4567 or visit http://x.y/z"), "Call [Phone] or visit [URL]");
  EXPECT_EQ(normalize("Closed Monday and all of October"), "Closed [DayOfWeek] and all of [Month]");
  EXPECT_EQ(normalize(""), "");
}

TEST(Normalize, EachGenericTerm) {
  EXPECT_EQ(normalize("mail tips@city.gov now"), "mail [Email] now");
  EXPECT_EQ(normalize("see www.example.com/a?b=1."), "see [URL].");
  EXPECT_EQ(normalize("info at bit.ly/abc"), "info at [URL]");
  EXPECT_EQ(normalize("thanks @CityPD!"), "thanks [Handle]!");
  EXPECT_EQ(normalize("call (555) 123-4567"), "call [Phone]");
  EXPECT_EQ(normalize("on 12/31/2017 and 2017-12-31"), "on [Date] and [Date]");
  EXPECT_EQ(normalize("1,000.5 sandbags and 12 trucks"), "[Number] sandbags and [Number] trucks");
  EXPECT_EQ(normalize("open tues and thurs"), "open [DayOfWeek] and [DayOfWeek]");
  EXPECT_EQ(normalize("Jan through Sept"), "[Month] through [Month]");
}

TEST(Normalize, AmbiguousShortNamesNeedCapital) {
  EXPECT_EQ(normalize("you may go"), "you may go");
  EXPECT_EQ(normalize("Opens in May"), "Opens in [Month]");
  EXPECT_EQ(normalize("we sat in the sun"), "we sat in the sun");
  EXPECT_EQ(normalize("Closed Sat and Sun"), "Closed [DayOfWeek] and [DayOfWeek]");
}

TEST(Normalize, Idempotent) {
  const std::vector<std::string> pieces = {
      "Call",  "555-123-4567", "http://a.b/c", "www.x.org", "a@b.com", "@handle", "12/31", "2017-01-02",
      "3.5",   "1,000",        "Monday",       "oct",       "May",     "may",     "Wed",   "road",
      "closed", "!",           "?",            "(555) 123-4567", "[URL]", "[Number]", "x.gov/y", "42nd",
      "co-op", "don't",        "Thurs",        "9am",       "#tag"};
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    std::string s;
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t k = 0; k < n; ++k) {
      if (k) s += rng.below(4) ? " " : "";
      s += pieces[rng.below(pieces.size())];
    }
    const auto once = normalize(s);
    EXPECT_EQ(normalize(once), once) << s;
  }
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(surfaces(tokenize("Road closed!")), (std::vector<std::string>{"Road", "closed", "!"}));
  EXPECT_EQ(surfaces(tokenize("[URL]")), (std::vector<std::string>{"[URL]"}));
  EXPECT_EQ(surfaces(tokenize("don't")), (std::vector<std::string>{"do", "n't"}));
  EXPECT_EQ(surfaces(tokenize("We're ready, it's well-known")),
            (std::vector<std::string>{"We", "'re", "ready", ",", "it", "'s", "well-known"}));
  EXPECT_EQ(surfaces(tokenize("can't [Number].")), (std::vector<std::string>{"ca", "n't", "[Number]", "."}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("  \n\t").empty());
}

TEST(Tokenize, NonEmptyTokensCoverInput) {
  const std::string alphabet = "ab Z9'-.,!?[]@#\t\n";
  Rng rng(12);
  for (int t = 0; t < 1000; ++t) {
    std::string s;
    const std::size_t n = rng.below(30);
    for (std::size_t k = 0; k < n; ++k) s += alphabet[rng.below(alphabet.size())];
    if (rng.below(3) == 0) s += " [URL] ";
    const auto toks = tokenize(s);
    std::string joined;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      EXPECT_FALSE(toks[i].surface.empty());
      EXPECT_EQ(toks[i].position, i);
      joined += toks[i].surface;
    }
    EXPECT_EQ(joined, strip_ws(s)) << s;
  }
}

TEST(Lemmatize, Examples) {
  Lemmatizer lem;
  EXPECT_EQ(lem.lemmatize("running", PosTag::VBG), "run");
  EXPECT_EQ(lem.lemmatize("dogs", PosTag::NNS), "dog");
  EXPECT_EQ(lem.lemmatize("[URL]", PosTag::NN), "[url]");
}

// Reference lemmas (WordNet morphy) for a fixed fixture list.
TEST(Lemmatize, FixtureList) {
  struct Case {
    const char* surface;
    PosTag tag;
    const char* lemma;
  };
  const Case cases[] = {
      {"cities", PosTag::NNS, "city"},       {"boxes", PosTag::NNS, "box"},
      {"classes", PosTag::NNS, "class"},     {"buses", PosTag::NNS, "bus"},
      {"children", PosTag::NNS, "child"},    {"people", PosTag::NNS, "people"},
      {"closed", PosTag::VBD, "close"},      {"stopped", PosTag::VBD, "stop"},
      {"evacuated", PosTag::VBN, "evacuate"}, {"provided", PosTag::VBN, "provide"},
      {"flooded", PosTag::VBN, "flood"},     {"carried", PosTag::VBD, "carry"},
      {"making", PosTag::VBG, "make"},       {"flooding", PosTag::VBG, "flood"},
      {"goes", PosTag::VBZ, "go"},           {"watches", PosTag::VBZ, "watch"},
      {"was", PosTag::VBD, "be"},            {"is", PosTag::VBZ, "be"},
      {"went", PosTag::VBD, "go"},           {"bigger", PosTag::JJR, "big"},
      {"happiest", PosTag::JJS, "happy"},    {"safer", PosTag::JJR, "safe"},
      {"Storms", PosTag::NNS, "storm"},      {"road", PosTag::NN, "road"},
  };
  Lemmatizer lem;
  for (const auto& c : cases) EXPECT_EQ(lem.lemmatize(c.surface, c.tag), c.lemma) << c.surface;
}

TEST(Lemmatize, LowercaseAndNonEmpty) {
  Lemmatizer lem;
  Rng rng(3);
  const std::string letters = "abcdefghijklmnopqrstuvwxyzABCDE";
  for (int t = 0; t < 2000; ++t) {
    std::string w;
    const std::size_t n = 1 + rng.below(10);
    for (std::size_t k = 0; k < n; ++k) w += letters[rng.below(letters.size())];
    const auto tag = static_cast<PosTag>(rng.below(kNumBaseTags));
    const auto l = lem.lemmatize(w, tag);
    EXPECT_FALSE(l.empty()) << w;
    EXPECT_EQ(l, to_lower(l));
  }
}

TEST(Lemmatize, LexiconFile) {
  TempDir tmp;
  atomic_write(tmp / "lex.tsv", "# comment\nmice\tNNS\tmouse\ngeese\t*\tgoose\n");
  Lemmatizer lem;
  lem.load_lexicon(tmp / "lex.tsv");
  EXPECT_EQ(lem.lemmatize("mice", PosTag::NNS), "mouse");
  EXPECT_EQ(lem.lemmatize("Geese", PosTag::NN), "goose");
  atomic_write(tmp / "bad.tsv", "mice\tNNS\n");
  EXPECT_ERROR_CODE(lem.load_lexicon(tmp / "bad.tsv"), FormatError);
}

TEST(Tags, TwoLetterAndComposite) {
  EXPECT_EQ(two_letter(PosTag::NNS), "NN");
  EXPECT_EQ(two_letter(PosTag::VBZ), "VB");
  EXPECT_EQ(two_letter(PosTag::PRPS), "PR");
  EXPECT_EQ(two_letter(PosTag::VerbPast), "VerbPast");
  EXPECT_TRUE(is_composite(PosTag::VerbFuture));
  EXPECT_FALSE(is_composite(PosTag::Dollar));
  for (std::size_t i = 0; i < kNumTags; ++i) EXPECT_EQ(parse_tag(kTagNames[i]), static_cast<PosTag>(i));
}

TEST(Tagger, BundledModelFixtures) {
  auto tagger = PerceptronTagger::load(PerceptronTagger::bundled_model_path());
  auto tag_of = [&](std::string_view s) { return tag_names(tagger.tag(std::span<const Token>(tokenize(s)))); };
  EXPECT_EQ(tag_of("A white male was dropped"), (std::vector<std::string>{"DT", "JJ", "NN", "VBD", "VBN"}));
  EXPECT_EQ(tag_of("the dog runs"), (std::vector<std::string>{"DT", "NN", "VBZ"}));
  EXPECT_TRUE(tagger.tag(std::span<const std::string>{}).empty());
}

TEST(Tagger, LengthAndNoCompositeTags) {
  auto tagger = PerceptronTagger::load(PerceptronTagger::bundled_model_path());
  Rng rng(5);
  const std::vector<std::string> words = {"the", "storm", "is", "coming", "!", "we", "have", "closed", "roads",
                                          "[Number]", "will", "be", "open", "tomorrow", "xqzv", "."};
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> s;
    const std::size_t n = rng.below(25);
    for (std::size_t k = 0; k < n; ++k) s.push_back(words[rng.below(words.size())]);
    const auto tags = tagger.tag(std::span<const std::string>(s));
    ASSERT_EQ(tags.size(), s.size());
    for (auto tg : tags) EXPECT_FALSE(is_composite(tg));
  }
}

TEST(Tagger, TrainSaveLoadRoundTrip) {
  TempDir tmp;
  const auto sents = parse_tagged_corpus(
      "The/DT dog/NN runs/VBZ ./.\n"
      "A/DT cat/NN sleeps/VBZ ./.\n"
      "Dogs/NNS run/VBP fast/RB ./.\n");
  PerceptronTagger t;
  PerceptronTagger::TrainOptions opt;
  opt.iterations = 5;
  t.train(sents, opt);
  t.save(tmp / "m.model");
  auto back = PerceptronTagger::load(tmp / "m.model");
  const std::vector<std::string> s = {"The", "cat", "runs", "."};
  EXPECT_EQ(t.tag(std::span<const std::string>(s)), back.tag(std::span<const std::string>(s)));
  EXPECT_EQ(t.serialize(), back.serialize());
  EXPECT_ERROR_CODE(parse_tagged_corpus("dog/NOPE"), FormatError);
  EXPECT_ERROR_CODE(parse_tagged_corpus("dog/VerbPast"), FormatError);
}

TEST(Tagger, MissingModel) {
  EXPECT_ERROR_CODE(PerceptronTagger::load("/nonexistent/tagger.model"), TaggerModelMissing);
  EXPECT_ERROR_CODE(Preprocessor(std::make_shared<const PerceptronTagger>()), TaggerModelMissing);
}

TEST(Clauses, Patterns) {
  auto run = [](std::string_view text, std::vector<PosTag> tags) {
    auto toks = tokenize(text);
    return detect_verb_clauses(toks, tags);
  };
  EXPECT_EQ(run("has completed", {PosTag::VBZ, PosTag::VBN}),
            (std::vector<VerbClause>{{0, 2, PosTag::VerbPast}}));
  EXPECT_EQ(run("is doing", {PosTag::VBZ, PosTag::VBG}), (std::vector<VerbClause>{{0, 2, PosTag::VerbPresent}}));
  EXPECT_EQ(run("will be doing", {PosTag::MD, PosTag::VB, PosTag::VBG}),
            (std::vector<VerbClause>{{0, 3, PosTag::VerbFuture}}));
  EXPECT_EQ(run("will go", {PosTag::MD, PosTag::VB}), (std::vector<VerbClause>{{0, 2, PosTag::VerbFuture}}));
  EXPECT_TRUE(run("has dogs", {PosTag::VBZ, PosTag::NNS}).empty());
  EXPECT_ERROR_CODE(run("has completed", {PosTag::VBZ}), LengthMismatch);
}

TEST(Clauses, ThroughBundledTagger) {
  const auto& p = bundled_preprocessor();
  auto clauses_of = [&](std::string text) { return p.process(msg("c", std::move(text))).clauses; };
  EXPECT_EQ(clauses_of("He has completed it"), (std::vector<VerbClause>{{1, 3, PosTag::VerbPast}}));
  EXPECT_EQ(clauses_of("is doing"), (std::vector<VerbClause>{{0, 2, PosTag::VerbPresent}}));
  EXPECT_EQ(clauses_of("will be doing"), (std::vector<VerbClause>{{0, 3, PosTag::VerbFuture}}));
}

TEST(Clauses, SpansValidAndDisjoint) {
  const std::vector<std::string> words = {"has", "have", "is", "was", "will", "be", "done", "doing", "go", "the"};
  const std::vector<PosTag> tagset = {PosTag::VBZ, PosTag::VBN, PosTag::VBG, PosTag::VB, PosTag::MD, PosTag::DT};
  Rng rng(6);
  for (int t = 0; t < 1000; ++t) {
    std::vector<Token> toks;
    std::vector<PosTag> tags;
    const std::size_t n = rng.below(12);
    for (std::size_t k = 0; k < n; ++k) {
      toks.push_back({words[rng.below(words.size())], "", k});
      tags.push_back(tagset[rng.below(tagset.size())]);
    }
    const auto cl = detect_verb_clauses(toks, tags);
    std::size_t prev_end = 0;
    for (const auto& c : cl) {
      EXPECT_LE(prev_end, c.begin);
      EXPECT_LT(c.begin, c.end);
      EXPECT_LE(c.end, n);
      EXPECT_TRUE(is_composite(c.tag));
      const auto head = to_lower(toks[c.begin].surface);
      const PosTag last = tags[c.end - 1];
      if (c.tag == PosTag::VerbPast) EXPECT_EQ(last, PosTag::VBN);
      if (c.tag == PosTag::VerbPresent) EXPECT_EQ(last, PosTag::VBG);
      if (c.tag == PosTag::VerbFuture) {
        EXPECT_EQ(head, "will");
        EXPECT_TRUE(last == PosTag::VB || last == PosTag::VBG);
      }
      prev_end = c.end;
    }
  }
}

TEST(Preprocess, PipelineAlignment) {
  const auto& p = bundled_preprocessor();
  auto pm = p.process(msg("1", "Shelters OPEN at 5pm, call 555-123-4567! Roads were closed Monday."));
  EXPECT_EQ(pm.tags.size(), pm.tokens.size());
  for (const auto& t : pm.tokens) {
    EXPECT_FALSE(t.lemma.empty());
    EXPECT_EQ(t.lemma, to_lower(t.lemma));
  }
  EXPECT_NE(pm.normalized_text.find("[Phone]"), std::string::npos);
  EXPECT_NE(pm.normalized_text.find("[DayOfWeek]"), std::string::npos);
  const auto lemmas = pm.lemmas();
  EXPECT_NE(std::find(lemmas.begin(), lemmas.end(), "[phone]"), lemmas.end());
}
