#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace carf {

// Malformed or inconsistent input data. The CLI maps this to exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an operation's preconditions (bad arguments).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Y4mError : public DataError {
 public:
  Y4mError(const std::string& what, std::uint64_t offset)
      : DataError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Numerical routine failed to converge or produced non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// External encoder process failed (non-zero exit, timeout, unreadable output).
class EncoderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace carf
