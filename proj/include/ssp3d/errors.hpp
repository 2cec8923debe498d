#pragma once

#include <stdexcept>
#include <string>

namespace ssp3d {

// Error categories map onto CLI exit codes: config=2, data=3, numeric=4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class FormatError : public DataError {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : DataError(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ssp3d
