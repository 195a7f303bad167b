#pragma once

#include <stdexcept>
#include <string>

namespace cxrbench {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kData = 2,
  kTraining = 3,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
  virtual const char* kind() const noexcept = 0;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kValidation; }
  const char* kind() const noexcept override { return "validation"; }
};

// Violated numeric precondition (zero class count, fraction outside (0,1), ...).
class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "domain"; }
};

class LookupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "lookup"; }
};

class InitializationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
  const char* kind() const noexcept override { return "initialization"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
  const char* kind() const noexcept override { return "data"; }
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse"; }

 private:
  std::size_t line_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "io"; }
};

class TrainingError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kTraining; }
  const char* kind() const noexcept override { return "training"; }
};

// Raised when early stopping is fed a non-consecutive epoch sequence.
class ProtocolError : public TrainingError {
 public:
  using TrainingError::TrainingError;
  const char* kind() const noexcept override { return "protocol"; }
};

}  // namespace cxrbench
