#pragma once

#include <stdexcept>
#include <string>

namespace mlah {

/// Invalid shapes, bad config values, unknown names.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values in a forward pass, gradient or loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Calling an operation outside its precondition (e.g. stepping a finished episode).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mlah
