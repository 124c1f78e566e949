#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmuclass {

enum class Errc {
  Io,
  MalformedHeader,
  MalformedRow,
  NonMonotonicTimestamps,
  UnsupportedFps,
  IrregularSampling,
  InconsistentChannels,
  WindowOutOfRange,
  TooManyMissing,
  AllMissing,
  GapRatioExceeded,
  NotGapFree,
  TooShort,
  QuantityMismatch,
  InvalidConfig,
  OutOfRange,
  InvalidDims,
  DimMismatch,
  NonFiniteInput,
  InsufficientData,
  MixedFeatureKinds,
  TrainingDiverged,
  OutOfBounds,
  SingularKernel,
  NegativeStd,
  LengthMismatch,
  BadLabel,
  EmptyMatrix,
  MalformedModel,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Io: return "Io";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::UnsupportedFps: return "UnsupportedFps";
    case Errc::IrregularSampling: return "IrregularSampling";
    case Errc::InconsistentChannels: return "InconsistentChannels";
    case Errc::WindowOutOfRange: return "WindowOutOfRange";
    case Errc::TooManyMissing: return "TooManyMissing";
    case Errc::AllMissing: return "AllMissing";
    case Errc::GapRatioExceeded: return "GapRatioExceeded";
    case Errc::NotGapFree: return "NotGapFree";
    case Errc::TooShort: return "TooShort";
    case Errc::QuantityMismatch: return "QuantityMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::InvalidDims: return "InvalidDims";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::MixedFeatureKinds: return "MixedFeatureKinds";
    case Errc::TrainingDiverged: return "TrainingDiverged";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::SingularKernel: return "SingularKernel";
    case Errc::NegativeStd: return "NegativeStd";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::BadLabel: return "BadLabel";
    case Errc::EmptyMatrix: return "EmptyMatrix";
    case Errc::MalformedModel: return "MalformedModel";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI drop report) can branch on it without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace pmuclass
