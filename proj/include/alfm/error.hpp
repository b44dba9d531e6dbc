#pragma once

#include <stdexcept>
#include <string>

namespace alfm {

// Error categories map onto CLI exit codes: config=1, data=2, internal=3.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

}  // namespace alfm
