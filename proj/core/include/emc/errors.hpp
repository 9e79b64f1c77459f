#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace emc {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

/// Base class for every error raised by the library. Each subclass maps to
/// one exit code so the CLI can translate failures without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept = 0;
};

/// Invalid hyperparameters, schedules, config files or mismatched shapes.
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

/// Invalid arguments to a pure operation (zero vector, non one-hot target,
/// out-of-range batch index, empty prediction list).
class InputError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

/// Dataset content problems: empty class pools, invalid records.
class DataError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

/// Malformed dataset file. Carries the byte offset where parsing failed.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  [[nodiscard]] std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite parameters or other numerical breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::kNumeric; }
};

/// Raised when the similarity weights of the selected classifiers sum to
/// (almost) zero, so the weighted average is undefined.
class DegenerateAggregationError : public NumericError {
 public:
  explicit DegenerateAggregationError(double weight_sum,
                                      std::optional<std::size_t> batch = std::nullopt)
      : NumericError(message(weight_sum, batch)), weight_sum_(weight_sum), batch_(batch) {}

  [[nodiscard]] double weight_sum() const noexcept { return weight_sum_; }
  [[nodiscard]] std::optional<std::size_t> batch() const noexcept { return batch_; }

  [[nodiscard]] DegenerateAggregationError at_batch(std::size_t batch) const {
    return DegenerateAggregationError(weight_sum_, batch);
  }

 private:
  static std::string message(double weight_sum, std::optional<std::size_t> batch) {
    std::string msg = "degenerate aggregation: sum of selected key similarities is " +
                      std::to_string(weight_sum);
    if (batch) msg += " at batch " + std::to_string(*batch);
    return msg;
  }

  double weight_sum_;
  std::optional<std::size_t> batch_;
};

}  // namespace emc
