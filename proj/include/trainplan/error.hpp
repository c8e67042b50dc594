// Copyright 2026 The trainplan Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trainplan {

enum class ErrorCode {
  kEmptyMeasurements,
  kNonPositiveValue,
  kInvalidArgument,
  kEmptyBatch,
  kMixedBatchIds,
  kInvalidRank,
  kDuplicateSample,
  kZeroTotalLoad,
  kUnknownSample,
  kSampleNotOnFromRank,
  kBatchTooLargeForOracle,
  kShapeMismatch,
  kTooManySlots,
  kInfeasible,
  kEmptyTrace,
  kInvalidTrace,
  kInvalidConfig,
  kZeroWallclock,
  kStoreUnwritable,
  kSerializationFailure,
  kNoValidSnapshot,
  kInsufficientHealthyNodes,
  kInvalidSchedule,
  kUnrecoverableCrash,
  kFileNotFound,
  kParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyMeasurements: return "EmptyMeasurements";
    case ErrorCode::kNonPositiveValue: return "NonPositiveValue";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kMixedBatchIds: return "MixedBatchIds";
    case ErrorCode::kInvalidRank: return "InvalidRank";
    case ErrorCode::kDuplicateSample: return "DuplicateSample";
    case ErrorCode::kZeroTotalLoad: return "ZeroTotalLoad";
    case ErrorCode::kUnknownSample: return "UnknownSample";
    case ErrorCode::kSampleNotOnFromRank: return "SampleNotOnFromRank";
    case ErrorCode::kBatchTooLargeForOracle: return "BatchTooLargeForOracle";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTooManySlots: return "TooManySlots";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kEmptyTrace: return "EmptyTrace";
    case ErrorCode::kInvalidTrace: return "InvalidTrace";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kZeroWallclock: return "ZeroWallclock";
    case ErrorCode::kStoreUnwritable: return "StoreUnwritable";
    case ErrorCode::kSerializationFailure: return "SerializationFailure";
    case ErrorCode::kNoValidSnapshot: return "NoValidSnapshot";
    case ErrorCode::kInsufficientHealthyNodes: return "InsufficientHealthyNodes";
    case ErrorCode::kInvalidSchedule: return "InvalidSchedule";
    case ErrorCode::kUnrecoverableCrash: return "UnrecoverableCrash";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

// All library failures are reported through this type. what() carries the
// human-readable message; code() is stable and machine-matchable.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace trainplan
