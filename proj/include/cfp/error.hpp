#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cfp {

// Base class for every error raised by the library. The subclasses mirror the
// failure categories callers are expected to tell apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated file contents.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(what) {}
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

// Well-formed input using an encoding the library does not handle.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Wrong buffer/matrix dimensions.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Shape or hyperparameter mismatch between components.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state that does not allow it.
class StateError : public Error {
 public:
  using Error::Error;
};

// Invalid caller-supplied data (too short, empty, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise numerically unusable values.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A pre-normalization embedding with (near) zero norm: the network is dead.
class DegenerateNormError : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfp
