#pragma once

#include <stdexcept>
#include <string>

namespace medgan {

// Invalid configuration values or inconsistent architecture descriptions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that an operation cannot accept.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Source/target files without a counterpart.
class PairingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Image files that are not 8-bit grayscale or have the wrong size.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint archives that fail the integrity digest or are truncated.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored tensors that do not fit the architecture they are loaded into.
class IncompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& term, long long step)
      : std::runtime_error("non-finite loss in term '" + term + "' at step " + std::to_string(step)),
        term_(term),
        step_(step) {}

  const std::string& term() const noexcept { return term_; }
  long long step() const noexcept { return step_; }

 private:
  std::string term_;
  long long step_;
};

// Field-level validation failure for externally supplied records.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace medgan
