#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scmkit {

enum class ErrorCode {
  // panel
  EmptyInput,
  MalformedRow,
  DuplicateKey,
  UnknownUnit,
  UnknownVariable,
  WindowOutOfRange,
  // study
  InvalidSpec,
  CoverageError,
  DonorPoolTooSmall,
  TreatedInDonors,
  ZeroVariancePredictor,
  // solver
  NonFiniteInput,
  NoConvergence,
  TooManyDonors,
  InvalidArgument,
  // inference
  EmptyWindow,
  YearNotInPost,
  // simlab
  InvalidConfig,
  // io / verification
  Io,
  VerificationFailed,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Which of the three CLI failure classes an error belongs to.
enum class ErrorClass { Config = 1, Data = 2, Numerical = 3 };

ErrorClass classify(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scmkit
