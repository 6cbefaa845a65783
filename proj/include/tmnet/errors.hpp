#pragma once

// Typed exceptions shared by every tmnet module. Each failure mode named in the
// public contracts gets its own subclass so callers (and the CLI exit-code
// mapping) can dispatch on type instead of parsing messages.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument that violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// --- ode ---------------------------------------------------------------------

class NonFiniteState : public Error {
 public:
  NonFiniteState(double t, std::size_t step, const std::string& what)
      : Error("non-finite state at t=" + std::to_string(t) + " (step " + std::to_string(step) +
              "): " + what),
        t_(t),
        step_(step) {}
  double time() const noexcept { return t_; }
  std::size_t step() const noexcept { return step_; }

 private:
  double t_;
  std::size_t step_;
};

class HistoryShapeMismatch : public Error {
 public:
  using Error::Error;
};

class MissingExactSolution : public Error {
 public:
  using Error::Error;
};

class DegenerateFit : public Error {
 public:
  using Error::Error;
};

// --- tensors / autodiff ------------------------------------------------------

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class InvalidLabel : public Error {
 public:
  using Error::Error;
};

class NotAScalar : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

// --- networks ----------------------------------------------------------------

class InsufficientBlocks : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config error at '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// --- data / io ---------------------------------------------------------------

class FileMissing : public Error {
 public:
  using Error::Error;
};

class TruncatedRecord : public Error {
 public:
  using Error::Error;
};

class LabelOutOfRange : public Error {
 public:
  using Error::Error;
};

class BadMagic : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public Error {
 public:
  using Error::Error;
};

class CorruptBlob : public Error {
 public:
  using Error::Error;
};

}  // namespace tmnet
