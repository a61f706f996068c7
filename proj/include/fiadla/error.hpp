#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fiadla {

// Tensor or layer shapes that do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A schedule or repair request that cannot be realized on the modeled hardware.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A layer tile whose working set exceeds an on-chip buffer.
class BufferOverflowError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

// Malformed or invalid configuration. Carries every violated field so callers
// can report them all at once.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  ConfigError(const std::string& what) : ConfigError(std::vector<std::string>{what}) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace fiadla
