#pragma once

#include <stdexcept>
#include <string>

namespace fastinject {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes of operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN / non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() from a non-scalar root.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent corpus / checkpoint data.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class OovError : public DataError {
 public:
  explicit OovError(const std::string& word)
      : DataError("out-of-vocabulary word: '" + word + "'"), word_(word) {}
  const std::string& word() const { return word_; }

 private:
  std::string word_;
};

// Sequence too short for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// A CTC target that no alignment of the given length can produce. Distinct
// from NumericError: the instance is well formed but has zero probability.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

}  // namespace fastinject
