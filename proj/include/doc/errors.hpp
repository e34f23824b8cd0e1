#pragma once

#include <stdexcept>
#include <string>

namespace doc {

// Base for every error the library raises. The CLI maps the concrete
// subclasses onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something that violates an operation's precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed file or stream content (datasets, vectors, model files).
class FormatError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Missing or inconsistent configuration, e.g. predicting without thresholds.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, std::size_t batch, const std::string& context = {})
      : Error(context + "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  int epoch_;
  std::size_t batch_;
};

}  // namespace doc
