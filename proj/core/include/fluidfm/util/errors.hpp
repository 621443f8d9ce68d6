#pragma once

#include <stdexcept>
#include <string>

namespace fluidfm {

/// Failure categories shared across the library. The CLI maps a subset of
/// these onto process exit codes.
enum class Err {
  // tensor
  ShapeMismatch,
  InvalidAttr,
  NonScalarLoss,
  DetachedNode,
  // simulation
  CflViolation,
  NonFiniteState,
  PositivityLoss,
  PoissonNoConverge,
  EmptyFamily,
  ResolutionMismatch,
  // rendering
  InvalidArc,
  OutOfBounds,
  BehindCamera,
  InvalidInterval,
  NegativeDensity,
  MissingDensityChannel,
  // training
  UnnormalizedInput,
  TooFewFrames,
  DivergedTraining,
  ZeroTarget,
  EmptyTrainingSet,
  // evaluation / orchestration
  CameraLeak,
  FutureLeak,
  MissingInput,
  IncompatibleRuns,
  // plumbing
  IoError,
  ConfigError,
};

const char* err_name(Err code);

class FluidError : public std::runtime_error {
 public:
  FluidError(Err code, const std::string& message);
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] void raise(Err code, const std::string& message);

inline void require(bool ok, Err code, const std::string& message) {
  if (!ok) raise(code, message);
}

}  // namespace fluidfm
