#include "fluidfm/util/errors.hpp"

namespace fluidfm {

const char* err_name(Err code) {
  switch (code) {
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::InvalidAttr: return "InvalidAttr";
    case Err::NonScalarLoss: return "NonScalarLoss";
    case Err::DetachedNode: return "DetachedNode";
    case Err::CflViolation: return "CflViolation";
    case Err::NonFiniteState: return "NonFiniteState";
    case Err::PositivityLoss: return "PositivityLoss";
    case Err::PoissonNoConverge: return "PoissonNoConverge";
    case Err::EmptyFamily: return "EmptyFamily";
    case Err::ResolutionMismatch: return "ResolutionMismatch";
    case Err::InvalidArc: return "InvalidArc";
    case Err::OutOfBounds: return "OutOfBounds";
    case Err::BehindCamera: return "BehindCamera";
    case Err::InvalidInterval: return "InvalidInterval";
    case Err::NegativeDensity: return "NegativeDensity";
    case Err::MissingDensityChannel: return "MissingDensityChannel";
    case Err::UnnormalizedInput: return "UnnormalizedInput";
    case Err::TooFewFrames: return "TooFewFrames";
    case Err::DivergedTraining: return "DivergedTraining";
    case Err::ZeroTarget: return "ZeroTarget";
    case Err::EmptyTrainingSet: return "EmptyTrainingSet";
    case Err::CameraLeak: return "CameraLeak";
    case Err::FutureLeak: return "FutureLeak";
    case Err::MissingInput: return "MissingInput";
    case Err::IncompatibleRuns: return "IncompatibleRuns";
    case Err::IoError: return "IoError";
    case Err::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

FluidError::FluidError(Err code, const std::string& message)
    : std::runtime_error(std::string(err_name(code)) + ": " + message), code_(code) {}

void raise(Err code, const std::string& message) { throw FluidError(code, message); }

}  // namespace fluidfm
