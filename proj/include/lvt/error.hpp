#pragma once

#include <stdexcept>
#include <string>

namespace lvt {

// Error taxonomy mirrors the CLI exit codes: config 2, data 3, numeric 4.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

struct ShapeError : NumericError {
  explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace lvt

#define LVT_CHECK(cond, ErrType, msg)            \
  do {                                           \
    if (!(cond)) throw ErrType(std::string(msg)); \
  } while (0)
