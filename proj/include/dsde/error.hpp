#pragma once

#include <stdexcept>
#include <string>

namespace dsde {

enum class ErrorCode {
  // input / data shape
  PARSE_ERROR,
  DUPLICATE_KEY,
  RAGGED_COVERAGE,
  UNKNOWN_DATASET,
  NONFINITE_SCORE,
  EMPTY_CALIBRATION,
  MISSING_CALIBRATION,
  INVALID_SCENARIO,
  INVALID_CONFIG,
  // parameter ranges
  ALPHA_OUT_OF_RANGE,
  LAMBDA_OUT_OF_RANGE,
  INDEX_OUT_OF_RANGE,
  EMPTY_SEARCH_RANGE,
  DEGENERATE_LAMBDA,
  // scorers
  EMPTY_LOGITS,
  NONFINITE_LOGIT,
  NONPOSITIVE_TEMPERATURE,
  K_OUT_OF_RANGE,
  DIMENSION_MISMATCH,
  ZERO_VECTOR,
  NONNORMALIZED_FEATURE,
  // metrics
  UNLABELED_SAMPLE,
  EMPTY_CLASS,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::PARSE_ERROR: return "PARSE_ERROR";
    case ErrorCode::DUPLICATE_KEY: return "DUPLICATE_KEY";
    case ErrorCode::RAGGED_COVERAGE: return "RAGGED_COVERAGE";
    case ErrorCode::UNKNOWN_DATASET: return "UNKNOWN_DATASET";
    case ErrorCode::NONFINITE_SCORE: return "NONFINITE_SCORE";
    case ErrorCode::EMPTY_CALIBRATION: return "EMPTY_CALIBRATION";
    case ErrorCode::MISSING_CALIBRATION: return "MISSING_CALIBRATION";
    case ErrorCode::INVALID_SCENARIO: return "INVALID_SCENARIO";
    case ErrorCode::INVALID_CONFIG: return "INVALID_CONFIG";
    case ErrorCode::ALPHA_OUT_OF_RANGE: return "ALPHA_OUT_OF_RANGE";
    case ErrorCode::LAMBDA_OUT_OF_RANGE: return "LAMBDA_OUT_OF_RANGE";
    case ErrorCode::INDEX_OUT_OF_RANGE: return "INDEX_OUT_OF_RANGE";
    case ErrorCode::EMPTY_SEARCH_RANGE: return "EMPTY_SEARCH_RANGE";
    case ErrorCode::DEGENERATE_LAMBDA: return "DEGENERATE_LAMBDA";
    case ErrorCode::EMPTY_LOGITS: return "EMPTY_LOGITS";
    case ErrorCode::NONFINITE_LOGIT: return "NONFINITE_LOGIT";
    case ErrorCode::NONPOSITIVE_TEMPERATURE: return "NONPOSITIVE_TEMPERATURE";
    case ErrorCode::K_OUT_OF_RANGE: return "K_OUT_OF_RANGE";
    case ErrorCode::DIMENSION_MISMATCH: return "DIMENSION_MISMATCH";
    case ErrorCode::ZERO_VECTOR: return "ZERO_VECTOR";
    case ErrorCode::NONNORMALIZED_FEATURE: return "NONNORMALIZED_FEATURE";
    case ErrorCode::UNLABELED_SAMPLE: return "UNLABELED_SAMPLE";
    case ErrorCode::EMPTY_CLASS: return "EMPTY_CLASS";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + ": " + msg), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

}  // namespace dsde
