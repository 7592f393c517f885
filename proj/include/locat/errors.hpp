// Copyright 2026 The LocAt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace locat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not line up (matmul inner dims, token count vs. grid, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scale or width argument outside its admissible range.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An index argument outside its valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed checkpoint or config file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a primitive; the message names the primitive.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace locat
