#pragma once

#include <stdexcept>
#include <string>

namespace blade {

/// Bad or inconsistent configuration (unknown keys, type errors, invalid values).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dataset synthesis / loading failures.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training-time failures (divergence, missing upstream artifacts, shape mismatches).
struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace blade
