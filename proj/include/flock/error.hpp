#pragma once

#include <stdexcept>
#include <string>

namespace flock {

/// Base class for every error raised by the library. The CLI maps
/// subclasses onto exit codes (data errors vs numeric failures).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FLOCK_DEFINE_ERROR(Name)             \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

FLOCK_DEFINE_ERROR(InvalidPair);
FLOCK_DEFINE_ERROR(InvalidAngle);
FLOCK_DEFINE_ERROR(InvalidInput);
FLOCK_DEFINE_ERROR(IngestFailure);
FLOCK_DEFINE_ERROR(MalformedGroupRow);
FLOCK_DEFINE_ERROR(InvalidBinWidth);
FLOCK_DEFINE_ERROR(InsufficientNegatives);
FLOCK_DEFINE_ERROR(CannotInterpolate);
FLOCK_DEFINE_ERROR(CannotFit);
FLOCK_DEFINE_ERROR(CheckpointError);
FLOCK_DEFINE_ERROR(ConfigMismatch);
FLOCK_DEFINE_ERROR(InvalidConfig);

/// Non-finite values met during a forward or backward pass.
class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& where, const std::string& what)
      : Error("numerical failure in " + where + ": " + what), where_(where) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(int epoch)
      : Error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

#undef FLOCK_DEFINE_ERROR

}  // namespace flock
