#pragma once

#include <stdexcept>
#include <string>

namespace dnp {

// Base class for every error raised by the library. Subclasses only carry a
// category so callers (mostly the CLI) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };

class NumericError : public Error {
 public:
  NumericError(const std::string& what, int operand)
      : Error(what), operand_(operand) {}
  int operand() const { return operand_; }

 private:
  int operand_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class GeometryError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class UnknownElementError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };
class TransferError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class SamplingError : public Error { using Error::Error; };
class EvaluationError : public Error { using Error::Error; };
class SweepError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

// Non-finite loss or gradient during optimization.
class DivergenceError : public Error { using Error::Error; };

}  // namespace dnp
