#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "stagegate/corpus.hpp"
#include "stagegate/preprocess.hpp"

namespace stagegate::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("stagegate-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Message msg(std::string id, std::string text, std::int64_t likes = 0,
                   std::optional<StageLabel> label = std::nullopt) {
  Message m;
  m.id = std::move(id);
  m.text = std::move(text);
  m.likes = likes;
  m.label = label;
  return m;
}

/// A processed message whose tokens carry the given lemmas verbatim; no
/// tagger involved.
inline ProcessedMessage from_lemmas(const std::vector<std::string>& lemmas, std::string id = "x") {
  ProcessedMessage pm;
  pm.source = msg(std::move(id), join(std::span<const std::string>(lemmas), " "));
  for (std::size_t i = 0; i < lemmas.size(); ++i) {
    Token t;
    t.surface = lemmas[i];
    t.lemma = lemmas[i];
    t.position = i;
    pm.tokens.push_back(t);
    pm.tags.push_back(PosTag::NN);
  }
  return pm;
}

inline const Preprocessor& bundled_preprocessor() {
  static const Preprocessor p = Preprocessor::with_bundled_model();
  return p;
}

}  // namespace stagegate::testing

#define EXPECT_ERROR_CODE(stmt, ec)                                                     \
  do {                                                                                  \
    try {                                                                               \
      stmt;                                                                             \
      ADD_FAILURE() << "expected " #ec ", nothing thrown";                              \
    } catch (const ::stagegate::Error& err_) {                                          \
      EXPECT_EQ(err_.code(), ::stagegate::ErrorCode::ec) << err_.what();                \
    }                                                                                   \
  } while (0)
