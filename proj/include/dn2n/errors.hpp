#pragma once

#include <stdexcept>
#include <string>

namespace dn2n {

/// Malformed or unreadable input data (files, directories, shapes read from disk).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A binary file whose header or payload does not match its format.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// A loss or output became NaN/Inf during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dn2n
