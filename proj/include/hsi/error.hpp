#pragma once

#include <stdexcept>
#include <string>

namespace hsi {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or invalid tensor shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (out-of-range parameter, bad configuration).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (weight files, PNG, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsi
