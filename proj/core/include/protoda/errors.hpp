// Copyright 2026 The ProtoDA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PROTODA_ERRORS_HPP
#define PROTODA_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace protoda {

/// Root of the project's exception hierarchy.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class CategoryMismatch : public Error {
 public:
  using Error::Error;
};

class SampleDecodeError : public Error {
 public:
  explicit SampleDecodeError(const std::string& file)
      : Error("failed to decode image sample: " + file), file_(file) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

class EmptyDomain : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& msg, long step)
      : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

class BackboneShapeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class AssignmentError : public Error {
 public:
  using Error::Error;
};

class EmptyClassError : public Error {
 public:
  using Error::Error;
};

class CacheMiss : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(const std::string& path)
      : Error("missing required artifact: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace protoda

#endif  // PROTODA_ERRORS_HPP
