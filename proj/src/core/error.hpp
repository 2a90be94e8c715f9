#pragma once

#include <stdexcept>
#include <string>

namespace vf {

// Error classes map 1:1 onto CLI exit codes / C API status values.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller violated a precondition or passed bad arguments / flags.
struct UsageError : Error {
  using Error::Error;
};

// Input data (dataset, config file, checkpoint) is missing or malformed.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values or other numeric breakdown at runtime.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace vf
