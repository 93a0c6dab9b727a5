#pragma once

#include <stdexcept>

namespace kgrec {

// Invalid or inconsistent configuration; the CLI maps it to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kgrec
