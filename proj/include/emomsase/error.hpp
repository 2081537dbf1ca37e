#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emomsase {

enum class ErrorKind {
  InvalidArgument,
  MissingFile,
  ParseError,
  NonMonotoneTimestamps,
  RateMismatch,
  AmbiguousBoundary,
  MajorityTie,
  EmptyVideo,
  MissingTable,
  CutoffOutOfRange,
  SignalTooShort,
  WindowTooLong,
  Downsampling,
  ZeroVariance,
  RecordingTooShort,
  WindowLargerThanSignal,
  NonIntegerHop,
  ShapeMismatch,
  NonFiniteActivation,
  TapeConsumed,
  SequenceTooShort,
  DimensionMismatch,
  InvalidClass,
  NonFiniteGradient,
  EmptySplit,
  DivergedLoss,
  TooFewParticipants,
  EmptyPredictions,
  NoClassifiers,
  Leakage,
  MissingChannel,
  UnknownKey,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace emomsase
