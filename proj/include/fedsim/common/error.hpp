// Copyright 2026 The Fedsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

// Base of every error the library raises. Callers that only care about
// "something went wrong in fedsim" catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid knob values, impossible partitions, bad CLI input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Shape or segment layout mismatch between tensors / parameter vectors.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Unreadable or malformed files. Carries the location when known.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input whose contents violate a domain rule (label range etc).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or parameter.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::size_t round, std::size_t client)
      : Error(what + " (round " + std::to_string(round) + ", client " +
              std::to_string(client) + ")"),
        round_(round),
        client_(client) {}

  std::size_t round() const { return round_; }
  std::size_t client() const { return client_; }

 private:
  std::size_t round_;
  std::size_t client_;
};

class ChartError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsim
