#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace attnlip {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not fit together, or an empty input where one is required.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// Dense Jacobian assembly would exceed the configured entry budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A callback produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace attnlip
