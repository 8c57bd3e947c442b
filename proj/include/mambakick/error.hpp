#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mambakick {

// Base of every error raised by the library. Subclasses map onto the CLI's
// exit codes (see ErrorKind).
enum class ErrorKind { generic, config, data, divergence };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorKind kind = ErrorKind::generic)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

class NumericDomainError : public Error {
 public:
  explicit NumericDomainError(const std::string& what)
      : Error("numeric domain error: " + what) {}
};

class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what)
      : Error("invalid input: " + what, ErrorKind::data) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("config error: " + what, ErrorKind::config) {}
};

// Dataset container / run-directory problems. Carries the offending sample id
// when one is known.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::string sample_id = {})
      : Error("data error: " + what + (sample_id.empty() ? "" : " (sample '" + sample_id + "')"),
              ErrorKind::data),
        sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

class CorruptHeaderError : public DataError {
 public:
  explicit CorruptHeaderError(const std::string& what) : DataError("corrupt header: " + what) {}
};

class DimensionMismatchError : public DataError {
 public:
  DimensionMismatchError(const std::string& what, std::string sample_id)
      : DataError("dimension mismatch: " + what, std::move(sample_id)) {}
};

class TruncatedPayloadError : public DataError {
 public:
  TruncatedPayloadError(const std::string& what, std::string sample_id)
      : DataError("truncated payload: " + what, std::move(sample_id)) {}
};

class FoldInfeasibleError : public DataError {
 public:
  explicit FoldInfeasibleError(const std::string& what) : DataError("fold infeasible: " + what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step)
      : Error("training diverged at step " + std::to_string(step) + ": " + what,
              ErrorKind::divergence),
        step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace mambakick
