// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace e3 {

// Error taxonomy. The CLI maps ConfigError to exit code 1 and every other
// E3Error to exit code 2.
class E3Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public E3Error {
 public:
  using E3Error::E3Error;
};

class DimensionError : public E3Error {
 public:
  using E3Error::E3Error;
};

class DataError : public E3Error {
 public:
  using E3Error::E3Error;
};

class ContractError : public E3Error {
 public:
  using E3Error::E3Error;
};

class LookupError : public E3Error {
 public:
  using E3Error::E3Error;
};

class FormatError : public E3Error {
 public:
  using E3Error::E3Error;
};

class IoError : public E3Error {
 public:
  using E3Error::E3Error;
};

class UndefinedError : public E3Error {
 public:
  using E3Error::E3Error;
};

}  // namespace e3
