// Copyright 2026 The polystack Authors.
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

namespace polystack {

// Base for every error the library raises. The CLI maps subclasses to exit
// codes: ValidationError and ParseError -> 2, NumericError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed config, out-of-range hyperparameter, structural
// mismatch during surgery.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& message, int line, int column)
      : ValidationError(std::to_string(line) + ":" + std::to_string(column) +
                        ": " + message),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

// Tensor shape disagreement at a graph node.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite values, gradient checks over tolerance, diverged training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace polystack
