// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace oicloc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-domain arguments.
class InputError : public Error {
 public:
  using Error::Error;
};

// Bad configuration, mismatched shapes between config and data, missing files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Outer ring collapsed onto the inner area after rounding.
class DegenerateOuterError : public InputError {
 public:
  using InputError::InputError;
};

// API misuse, e.g. backward without a matching train-mode forward.
class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Non-finite gradients or parameters during optimization.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace oicloc
