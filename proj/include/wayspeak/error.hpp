// Copyright 2026 The Wayspeak Authors
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

namespace wayspeak {

// All failures carry a short machine-parsable category so the CLI can emit
// one-line errors of the form "error: <category>: <message>".
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& m) : Error("parameter", m) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& m) : Error("index", m) {}
};

// Broken caller contract (e.g. backward on a non-scalar, missing BOS).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract", m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error("validation", m) {}
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(const std::string& m) : Error("alignment", m) {}
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& m) : Error("generation", m) {}
};

class SamplingError : public Error {
 public:
  explicit SamplingError(const std::string& m) : Error("sampling", m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

class CorruptCheckpointError : public Error {
 public:
  explicit CorruptCheckpointError(const std::string& m)
      : Error("corrupt-checkpoint", m) {}
};

class VersionMismatchError : public Error {
 public:
  explicit VersionMismatchError(const std::string& m)
      : Error("version-mismatch", m) {}
};

}  // namespace wayspeak
