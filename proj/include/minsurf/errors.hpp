/**
 * @file  errors.hpp
 * @brief Error taxonomy for the minimal-surface laboratory.
 *
 * Every failure mode that callers can act on gets its own exception type.
 * The CLI maps these onto process exit codes:
 *   0  success
 *   2  invalid configuration / usage (ConfigInvalid)
 *   3  a well-identified numerical or model obstruction (everything else below)
 *   1  anything unexpected (std::exception that is not ours)
 */
#pragma once

#include <stdexcept>
#include <string>

namespace minsurf {

/// Base class for all laboratory errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration file / CLI arguments are malformed or inconsistent.
struct ConfigInvalid : Error {
  using Error::Error;
};

/// The metric family fails to be positive definite where it was sampled.
struct NotSPD : Error {
  using Error::Error;
};

/// A module that requires a minimal central slice (vanishing mean-curvature
/// trace at s = 0) was handed a family that is not minimal there.
struct NonMinimal : Error {
  using Error::Error;
};

/// Damped Newton failed to reach the requested tolerance.
struct NewtonDiverged : Error {
  using Error::Error;
};

/// The stability operator is not positive definite, so the background is
/// degenerate or unstable and linearized solves are not trustworthy.
struct EigenvalueObstruction : Error {
  using Error::Error;
};

/// A compactly supported ingredient (potential, perturbation, cutoff) leaks
/// outside the region a construction assumes it lives in.
struct SupportViolation : Error {
  using Error::Error;
};

/// Grid spacing is too coarse for the oscillation the computation must carry.
struct UnderResolved : Error {
  using Error::Error;
};

/// Contraction series stopped converging (term norms grow).
struct SeriesDiverging : Error {
  using Error::Error;
};

/// An integrand handed to the degree-weighted calculus does not vanish to the
/// order the requested manipulation needs.
struct DegreeTooLow : Error {
  using Error::Error;
};

/// A least-squares decode step is too ill-conditioned to trust.
struct FitIllConditioned : Error {
  using Error::Error;
};

/// A calibrated decode was requested without a calibration run.
struct CalibrationMissing : Error {
  using Error::Error;
};

}  // namespace minsurf
