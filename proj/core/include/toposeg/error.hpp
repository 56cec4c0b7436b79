#pragma once

#include <stdexcept>
#include <string>

namespace toposeg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents do not agree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// A computation produced or consumed a NaN or infinity.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input bytes do not follow the expected file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Declared dimensions exceed the configured read cap.
class LimitError : public Error {
 public:
  using Error::Error;
};

/// Stored checksum does not match the payload.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// File written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Requested feature is deliberately not provided (e.g. the boundary loss).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace toposeg
