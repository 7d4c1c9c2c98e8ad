#pragma once

#include <stdexcept>
#include <string>

namespace sslab {

// Invalid generator or experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message names the offending line.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training diverged; the message names the epoch.
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sslab
