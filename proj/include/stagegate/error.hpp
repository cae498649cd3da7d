#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stagegate {

enum class ErrorCode {
  // corpus
  FileNotFound,
  RecordInvalid,
  DuplicateId,
  EmptyDataset,
  DegenerateSplit,
  UnlabeledMessage,
  // textprep
  TaggerModelMissing,
  LengthMismatch,
  // features
  EmptyCorpus,
  IdfMissing,
  VocabMismatch,
  EmptyParts,
  EmptyEmbeddingTable,
  // embeddings
  EmptyCorpusAfterFiltering,
  FormatError,
  InconsistentDimension,
  WordNotFound,
  InvalidConfig,
  // svm
  SingleClassInput,
  DimMismatch,
  TooFewExamplesForFolds,
  // nncore / models
  KernelTooLarge,
  ShapeMismatch,
  InvalidClassIndex,
  FeatureWidthTooSmall,
  EmptyData,
  EmptySpace,
  // eval
  Empty,
  ZeroSupports,
  KTooLarge,
  // generic
  Io,
  InvariantViolation,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::RecordInvalid: return "RecordInvalid";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::UnlabeledMessage: return "UnlabeledMessage";
    case ErrorCode::TaggerModelMissing: return "TaggerModelMissing";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IdfMissing: return "IdfMissing";
    case ErrorCode::VocabMismatch: return "VocabMismatch";
    case ErrorCode::EmptyParts: return "EmptyParts";
    case ErrorCode::EmptyEmbeddingTable: return "EmptyEmbeddingTable";
    case ErrorCode::EmptyCorpusAfterFiltering: return "EmptyCorpusAfterFiltering";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InconsistentDimension: return "InconsistentDimension";
    case ErrorCode::WordNotFound: return "WordNotFound";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::TooFewExamplesForFolds: return "TooFewExamplesForFolds";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidClassIndex: return "InvalidClassIndex";
    case ErrorCode::FeatureWidthTooSmall: return "FeatureWidthTooSmall";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::EmptySpace: return "EmptySpace";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::ZeroSupports: return "ZeroSupports";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library. `code()` identifies the contract that
/// was violated; `line()` is set for file-format errors (1-based, 0 if n/a).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace stagegate
