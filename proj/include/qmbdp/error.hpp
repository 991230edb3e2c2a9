#pragma once

#include <stdexcept>
#include <string>

namespace qmbdp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad size, bad site, bad parameter).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A requested problem size exceeds a configured budget. Carries the name of
/// the module that refused it.
class CapacityError : public ValidationError {
 public:
  CapacityError(std::string module, const std::string& what)
      : ValidationError(module + ": " + what), module_(std::move(module)) {}

  [[nodiscard]] const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

/// Lookup of something that is not there (e.g. a bitstring outside a sector).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure could not deliver a meaningful result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qmbdp
