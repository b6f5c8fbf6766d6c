#include "scmkit/error.hpp"

namespace scmkit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::UnknownUnit: return "UnknownUnit";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::CoverageError: return "CoverageError";
    case ErrorCode::DonorPoolTooSmall: return "DonorPoolTooSmall";
    case ErrorCode::TreatedInDonors: return "TreatedInDonors";
    case ErrorCode::ZeroVariancePredictor: return "ZeroVariancePredictor";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::TooManyDonors: return "TooManyDonors";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::YearNotInPost: return "YearNotInPost";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::VerificationFailed: return "VerificationFailed";
  }
  return "Unknown";
}

ErrorClass classify(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::TreatedInDonors:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
    case ErrorCode::Io:
      return ErrorClass::Config;
    case ErrorCode::NonFiniteInput:
    case ErrorCode::NoConvergence:
    case ErrorCode::VerificationFailed:
      return ErrorClass::Numerical;
    default:
      return ErrorClass::Data;
  }
}

}  // namespace scmkit
