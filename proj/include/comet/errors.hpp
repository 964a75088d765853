#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A wait was abandoned because the waiting context was asked to stop, or the
// conduit it waited on was closed.
class Stopped : public Error {
 public:
  Stopped() : Error("stopped") {}
  using Error::Error;
};

class SinkClosed : public Error {
 public:
  SinkClosed() : Error("trace sink closed") {}
};

class UnknownConduit : public Error {
 public:
  using Error::Error;
};

class HostRequired : public Error {
 public:
  using Error::Error;
};

class AlreadyStarted : public Error {
 public:
  using Error::Error;
};

class WrongContext : public Error {
 public:
  using Error::Error;
};

class InvalidCapacity : public Error {
 public:
  using Error::Error;
};

/// An endpoint was requested from a port that is absent or of another type.
class PortError : public Error {
 public:
  using Error::Error;
};

class MissingBehavior : public Error {
 public:
  using Error::Error;
};

class UnknownObject : public Error {
 public:
  using Error::Error;
};

/// Parse failure with a 1-based source position.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class SyntaxError : public ParseError {
 public:
  using ParseError::ParseError;
};

class DuplicateName : public ParseError {
 public:
  using ParseError::ParseError;
};

class DanglingReference : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace comet

namespace comet {

/// Raised by Reply<T>::value() when the service answered with an error.
class ServiceFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace comet
