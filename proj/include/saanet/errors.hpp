#pragma once

#include <stdexcept>
#include <string>

namespace saanet {

// Invalid configuration: bad layer spec, channel divisibility, missing
// checkpoint, unreachable upsampling factor.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or image dimensions that violate an operation's preconditions.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf loss or divergence during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system and format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace saanet
