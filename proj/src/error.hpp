#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wvad {

// Error categories. The numeric values double as process exit codes for the
// command-line front end, so keep them stable.
enum class ErrorKind : int {
  Config = 2,
  Argument = 2,
  Dimension = 2,
  Io = 3,
  Format = 3,
  Numeric = 4,
  UndefinedMetric = 4,
  Training = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, "configuration error: " + w) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::Argument, "argument error: " + w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, "dimension error: " + w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, "I/O error: " + w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, "numerical failure: " + w) {}
};
struct UndefinedMetricError : Error {
  explicit UndefinedMetricError(const std::string& w)
      : Error(ErrorKind::UndefinedMetric, "undefined metric: " + w) {}
};
struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(ErrorKind::Training, "training error: " + w) {}
};

// Raised by binary readers; carries the byte offset where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& w, std::uint64_t offset)
      : Error(ErrorKind::Format, "format error at offset " + std::to_string(offset) + ": " + w),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace wvad
