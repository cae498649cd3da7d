#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagegate/corpus.hpp"
#include "stagegate/tagger.hpp"
#include "stagegate/textprep.hpp"

namespace stagegate {

/// A message after normalize -> tokenize -> tag -> lemmatize -> clause
/// detection. `tags` is aligned 1:1 with `tokens`; composite clause tags live
/// in `clauses` only.
struct ProcessedMessage {
  Message source;
  std::string normalized_text;
  std::vector<Token> tokens;
  std::vector<PosTag> tags;
  std::vector<VerbClause> clauses;

  std::vector<std::string> lemmas() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.lemma);
    return out;
  }
};

class Preprocessor {
 public:
  explicit Preprocessor(std::shared_ptr<const PerceptronTagger> tagger, Lemmatizer lemmatizer = {})
      : tagger_(std::move(tagger)), lemmatizer_(std::move(lemmatizer)) {
    if (!tagger_ || !tagger_->loaded())
      throw Error(ErrorCode::TaggerModelMissing, "preprocessor needs a loaded tagger");
  }

  /// Uses the bundled tagger model.
  static Preprocessor with_bundled_model() {
    return Preprocessor(std::make_shared<const PerceptronTagger>(
        PerceptronTagger::load(PerceptronTagger::bundled_model_path())));
  }

  ProcessedMessage process(const Message& m) const {
    ProcessedMessage pm;
    pm.source = m;
    pm.normalized_text = normalize(m.text);
    pm.tokens = tokenize(pm.normalized_text);
    pm.tags = tagger_->tag(std::span<const Token>(pm.tokens));
    for (std::size_t i = 0; i < pm.tokens.size(); ++i) {
      pm.tokens[i].lemma = lemmatizer_.lemmatize(pm.tokens[i].surface, pm.tags[i]);
    }
    pm.clauses = detect_verb_clauses(pm.tokens, pm.tags);
    return pm;
  }

  std::vector<ProcessedMessage> process(const Dataset& d) const {
    std::vector<ProcessedMessage> out;
    out.reserve(d.size());
    for (const auto& m : d) out.push_back(process(m));
    return out;
  }

  const PerceptronTagger& tagger() const { return *tagger_; }
  const Lemmatizer& lemmatizer() const { return lemmatizer_; }

 private:
  std::shared_ptr<const PerceptronTagger> tagger_;
  Lemmatizer lemmatizer_;
};

inline nlohmann::json processed_to_json(const ProcessedMessage& pm) {
  nlohmann::json j = message_to_json(pm.source);
  j["normalized"] = pm.normalized_text;
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (std::size_t i = 0; i < pm.tokens.size(); ++i) {
    toks.push_back({{"surface", pm.tokens[i].surface},
                    {"lemma", pm.tokens[i].lemma},
                    {"tag", std::string(tag_name(pm.tags[i]))}});
  }
  auto& cl = j["clauses"] = nlohmann::json::array();
  for (const auto& c : pm.clauses) {
    cl.push_back({{"begin", c.begin}, {"end", c.end}, {"tag", std::string(tag_name(c.tag))}});
  }
  return j;
}

}  // namespace stagegate
