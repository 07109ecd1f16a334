#pragma once

#include <stdexcept>
#include <string>

namespace dbkd {

// Every library failure derives from Error so callers can map categories
// onto process exit codes (see tools/dbkd.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not compose: matmul inner dims, conv kernel > input, ...
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (non-scalar loss, tap mismatch).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Out-of-range hyper-parameter (T <= 0, unknown enum value, empty grid).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed model/run/cohort configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or degenerate data: empty sets, single class, constant channels.
class DataError : public Error {
 public:
  using Error::Error;
};

// On-disk file rejected: magic, version, truncation or checksum.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// NaN or Inf produced during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbkd
