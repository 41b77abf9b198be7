#pragma once

#include <stdexcept>
#include <string>

namespace snrge {

/// Broad failure categories. Each maps onto one CLI exit code and one C API
/// status code.
enum class ErrorKind {
  kUsage = 1,    // bad parameters, malformed config
  kData = 2,     // missing/corrupt files, shape mismatches in inputs
  kNumeric = 3,  // undefined correlation, non-finite loss, divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace snrge
