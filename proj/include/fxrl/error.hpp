#pragma once

#include <stdexcept>
#include <string>

namespace fxrl {

// Error categories map one-to-one onto CLI exit codes (see tools/fxrl.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad config text, unknown key, type mismatch, out-of-range parameter.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or insufficient market data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or similar optimizer breakdown.
class TrainingFault : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition (wrong row count, all-false mask,
// stepping a finished episode, dimension mismatch).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fxrl
