// Copyright 2026  The msq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iostream>
#include <stdexcept>
#include <string>

namespace msq {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or version-mismatched binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Dataset ingestion problems (missing files, bad columns, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Configuration documents that fail validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline bool &quiet_flag() {
  static bool quiet = false;
  return quiet;
}
}  // namespace detail

/// Silences warnings; tests use it to keep their output readable.
inline void set_quiet(bool quiet) { detail::quiet_flag() = quiet; }

inline void log_warning(const std::string &msg) {
  if (!detail::quiet_flag()) std::cerr << "WARNING: " << msg << '\n';
}

inline void log_info(const std::string &msg) {
  if (!detail::quiet_flag()) std::cerr << "LOG: " << msg << '\n';
}

}  // namespace msq
