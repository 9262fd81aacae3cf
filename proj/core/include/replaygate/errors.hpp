// Copyright 2026 The replaygate Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef REPLAYGATE_ERRORS_HPP_
#define REPLAYGATE_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace replaygate {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A non-finite value appeared or a training run diverged.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage was invoked before the artifacts it consumes exist.
class StageOrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pretraining exhausted its budget below the minimum usable accuracy.
class PretrainingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace replaygate

#endif  // REPLAYGATE_ERRORS_HPP_
