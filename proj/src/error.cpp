#include "emomsase/error.hpp"

namespace emomsase {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
    case ErrorKind::RateMismatch: return "RateMismatch";
    case ErrorKind::AmbiguousBoundary: return "AmbiguousBoundary";
    case ErrorKind::MajorityTie: return "MajorityTie";
    case ErrorKind::EmptyVideo: return "EmptyVideo";
    case ErrorKind::MissingTable: return "MissingTable";
    case ErrorKind::CutoffOutOfRange: return "CutoffOutOfRange";
    case ErrorKind::SignalTooShort: return "SignalTooShort";
    case ErrorKind::WindowTooLong: return "WindowTooLong";
    case ErrorKind::Downsampling: return "Downsampling";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::RecordingTooShort: return "RecordingTooShort";
    case ErrorKind::WindowLargerThanSignal: return "WindowLargerThanSignal";
    case ErrorKind::NonIntegerHop: return "NonIntegerHop";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorKind::TapeConsumed: return "TapeConsumed";
    case ErrorKind::SequenceTooShort: return "SequenceTooShort";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidClass: return "InvalidClass";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::TooFewParticipants: return "TooFewParticipants";
    case ErrorKind::EmptyPredictions: return "EmptyPredictions";
    case ErrorKind::NoClassifiers: return "NoClassifiers";
    case ErrorKind::Leakage: return "Leakage";
    case ErrorKind::MissingChannel: return "MissingChannel";
    case ErrorKind::UnknownKey: return "UnknownKey";
  }
  return "Unknown";
}

}  // namespace emomsase
