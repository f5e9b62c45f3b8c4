#pragma once

#include <stdexcept>
#include <string>

namespace rsnn {

/// Bad configuration file line, key, or value. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incompatible data file (checkpoint, dataset). Maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rsnn
