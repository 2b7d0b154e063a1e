#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace attntrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A layer, head or token index outside the trace bounds.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the domain of an operation (empty list, bad k, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inputs whose tensor shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data (bad magic, unparsable header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Serialized payload shorter than its header announces.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Failed file or stream operation.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A data-model invariant does not hold. `invariant()` names it.
class ValidationError : public Error {
 public:
  ValidationError(std::string invariant, const std::string& detail)
      : Error("invariant '" + invariant + "' violated: " + detail),
        invariant_(std::move(invariant)) {}

  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

}  // namespace attntrack
