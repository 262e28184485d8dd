#pragma once

#include <stdexcept>
#include <string>

namespace stochres {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-range argument.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// The potential violates a standing assumption (e.g. a vanishing well).
class AssumptionViolation : public Error {
  public:
    using Error::Error;
};

/// The transition window [a - h, a + h] is not admissible.
class WindowError : public Error {
  public:
    using Error::Error;
};

/// Adaptive quadrature did not reach the requested tolerance.
class QuadratureError : public Error {
  public:
    QuadratureError(const std::string& what, double achieved)
        : Error(what), achieved_(achieved) {}
    double achieved() const noexcept { return achieved_; }

  private:
    double achieved_;
};

/// Euler step produced a non-finite position.
class BlowUpError : public Error {
  public:
    BlowUpError(const std::string& what, double time, double position)
        : Error(what), time_(time), position_(position) {}
    double time() const noexcept { return time_; }
    double position() const noexcept { return position_; }

  private:
    double time_;
    double position_;
};

/// A Monte Carlo estimate has no usable samples.
class DegenerateEstimate : public Error {
  public:
    using Error::Error;
};

/// A frozen drift lost the minimum/saddle/minimum structure.
class StructureError : public Error {
  public:
    using Error::Error;
};

/// Eigensolver failed its residual or truncation checks.
class EigenError : public Error {
  public:
    using Error::Error;
};

/// Inflection-point search found inconsistent curvature structure.
class InflectionError : public Error {
  public:
    using Error::Error;
};

/// Configuration text could not be parsed or validated.
class ConfigError : public Error {
  public:
    using Error::Error;
};

} // namespace stochres
