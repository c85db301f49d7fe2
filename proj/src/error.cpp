#include "medpred/error.hpp"

namespace medpred {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedNote: return "MalformedNote";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::TooFewExamples: return "TooFewExamples";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::WindowTooLarge: return "WindowTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NotScalarLoss: return "NotScalarLoss";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::UnknownWord: return "UnknownWord";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::BadPerplexity: return "BadPerplexity";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Format: return "Format";
  }
  return "Unknown";
}

}  // namespace medpred
