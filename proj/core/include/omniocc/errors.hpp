#pragma once

#include <stdexcept>
#include <string>

namespace omniocc {

/// Invalid configuration or parameters. The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing, malformed or inconsistent input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace omniocc
