#pragma once

#include <stdexcept>
#include <string>

namespace adtp {

/// Base class for all library errors. The category maps onto the CLI exit
/// code (2 config, 3 data, 4 numeric).
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept = 0;
};

class ConfigError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class DataError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class NumericError : public Error {
public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

} // namespace adtp
