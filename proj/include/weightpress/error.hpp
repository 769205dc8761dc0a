#pragma once

#include <stdexcept>
#include <string>

namespace weightpress {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Wrong axis count or non-conformable shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (alpha, probabilities, ranks, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent pipeline configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An iterative optimizer produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Archive decoding failures. Each subclass is a distinct, catchable cause.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DuplicateNameError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Dimensions that cannot describe the payload: zero-sized axes, overflowing
// element counts, or bytes left over after the last declared entry.
class LengthMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedDtypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A compression report disagrees with the artifacts it describes.
class VerificationError : public Error {
 public:
  VerificationError(const std::string& field, const std::string& what)
      : Error(what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace weightpress
