#ifndef HKPROP_ERRORS_HPP
#define HKPROP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace hkprop {

/// Base class for all hkprop failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite or malformed input data.
struct InvalidInputError : Error {
  using Error::Error;
};

/// Spreading matrix not complex symmetric with positive definite real part.
struct InvalidSpreadingError : Error {
  using Error::Error;
};

/// Branch continuity guard tripped; the caller must refine the time step.
struct StepTooLargeError : Error {
  using Error::Error;
};

/// Conditioning collapsed, e.g. the prefactor matrix became near-singular.
struct NumericalDegeneracyError : Error {
  using Error::Error;
};

/// Flow left the integration accuracy envelope (energy drift, halving budget).
struct IntegrationAccuracyError : Error {
  using Error::Error;
};

/// Wavepacket mass reached the periodic box boundary.
struct BoxTooSmallError : Error {
  using Error::Error;
};

/// Finite-difference stencil would read outside the trajectory lattice.
struct ShrinkDomainError : Error {
  using Error::Error;
};

/// Two grids that must match do not.
struct GridMismatchError : Error {
  using Error::Error;
};

/// Bad experiment configuration (CLI exit status 2).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace hkprop

#endif
