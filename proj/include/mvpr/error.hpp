#pragma once

#include <stdexcept>
#include <string>

namespace mvpr {

// Base for every error raised by the toolkit. Callers that only need to
// report a failure can catch this; the subclasses exist so that the CLI can
// map failures onto exit codes and tests can check the failure category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (bad geometry, empty graph,
// missing pose, ...).
class RejectedInput : public Error {
 public:
  using Error::Error;
};

// Programming-contract violation: mismatched shapes, odd matching input, etc.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file / document.
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersion : public ParseError {
 public:
  using ParseError::ParseError;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

// A downward line trace found no geometry under the requested location.
class OutsideFootprint : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace mvpr
