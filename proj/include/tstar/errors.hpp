#pragma once

#include <stdexcept>
#include <string>

namespace tstar {

// Error taxonomy mirrors CLI exit codes: usage/config -> 1, data -> 2,
// numerical divergence -> 3.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericsError : std::runtime_error {
  explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tstar
