#pragma once

#include <stdexcept>
#include <string>

namespace fiberseg {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument value (negative sigma, empty scale set, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Two grids that must agree do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or format failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fiberseg
