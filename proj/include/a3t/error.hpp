#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace a3t {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the domain an operation accepts (negative weight, sigma <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A precondition on sizes or counts that is not a plain shape mismatch.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t row, std::size_t col, const std::string& what)
      : Error(source + ":" + std::to_string(row) + (col ? ":" + std::to_string(col) : std::string{}) +
              ": " + what),
        row_(row),
        col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

/// Loss became non-finite during training.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, double loss)
      : Error("non-finite loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace a3t
