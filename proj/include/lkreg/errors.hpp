#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lkreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Logarithm requested at (or too close to) a rotation of pi.
class SingularityError : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation needs an inference-mode network.
class ModeError : public Error {
 public:
  using Error::Error;
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Jacobian (or cross-covariance) lost rank. Carries build diagnostics.
class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, long rank, double condition)
      : Error(what), rank_(rank), condition_(condition) {}
  long rank() const { return rank_; }
  double condition() const { return condition_; }

 private:
  long rank_;
  double condition_;
};

}  // namespace lkreg
