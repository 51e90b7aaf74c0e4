// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protolens {

/// Base class for every error raised by the toolkit. `kind()` is a stable
/// machine-readable tag used by the CLI error line.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  const char* kind() const noexcept override { return "parse_error"; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation_error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape_error"; }
};

class VocabularyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "vocabulary_error"; }
};

class CheckpointError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "checkpoint_error"; }
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "training_diverged"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

}  // namespace protolens
