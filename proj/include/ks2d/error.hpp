#pragma once

#include <stdexcept>
#include <string>

namespace ks2d {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameters (domain, grid family, config file, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A field that is supposed to be real-valued violates conjugate symmetry.
class MalformedField : public Error {
 public:
  using Error::Error;
};

/// Array shape does not match the owning domain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Failure of file parsing or writing.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The time integration blew up.
class DivergenceError : public Error {
 public:
  DivergenceError(double t, double cost)
      : Error("solution diverged at t = " + std::to_string(t) +
              " (norm = " + std::to_string(cost) + ")"),
        time(t),
        c1(cost) {}

  double time;
  double c1;
};

}  // namespace ks2d
