/*
 * Copyright 2026 The mpd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MPD_ERROR_H_
#define MPD_ERROR_H_

#include <stdexcept>
#include <string>

namespace mpd {

// Base class of every error raised by the library. The CLI maps the two
// branches below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: parse failures, dangling references,
// missing embeddings, dimension mismatches, bad magic bytes.
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure at a known line of a text input.
class ParseError : public DataError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class MissingKeyError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// Programming or configuration errors: shape mismatches inside the engine,
// out-of-range hyperparameters, misuse of a tape.
class RuntimeError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

class ConfigError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

}  // namespace mpd

#endif  // MPD_ERROR_H_
