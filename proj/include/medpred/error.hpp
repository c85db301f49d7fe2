#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace medpred {

enum class ErrorCode {
  MalformedNote,
  EmptyCorpus,
  TooFewExamples,
  InvalidSpec,
  ShapeMismatch,
  WindowTooLarge,
  EmptyInput,
  InvalidRate,
  BatchTooSmall,
  NotScalarLoss,
  NonFinite,
  SequenceTooShort,
  EmptyBatch,
  DegenerateVariance,
  UnknownWord,
  TooFewPoints,
  BadPerplexity,
  Io,
  Config,
  Format,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; the code distinguishes failure kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace medpred
