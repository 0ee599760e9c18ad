#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace kdla {

struct MlpParams;

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user configuration (bad recipe, M <= D, unknown names). CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Iterative method failed or non-finite values appeared. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged. Carries the parameters of the last epoch with a finite loss.
class TrainingError : public NumericalError {
 public:
  TrainingError(const std::string& what, std::size_t last_good_epoch,
                std::shared_ptr<const MlpParams> last_good)
      : NumericalError(what), last_good_epoch_(last_good_epoch), last_good_(std::move(last_good)) {}

  std::size_t last_good_epoch() const noexcept { return last_good_epoch_; }
  const std::shared_ptr<const MlpParams>& last_good() const noexcept { return last_good_; }

 private:
  std::size_t last_good_epoch_;
  std::shared_ptr<const MlpParams> last_good_;
};

}  // namespace kdla
