#pragma once

#include <stdexcept>
#include <string>

namespace fairhyp {

/// Invalid configuration, shape contract violation, or bad argument.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value appeared where the computation requires finite data.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant (e.g. a recorded op without a gradient rule).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// File system or format failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairhyp
