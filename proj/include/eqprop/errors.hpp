#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eqprop {

/// Shape or rank mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A stored index map or file payload is internally inconsistent.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (e.g. trajectory too short).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The dynamics produced a non-finite or exploding state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& phase, std::size_t step, const std::string& detail)
      : std::runtime_error(phase + " diverged at step " + std::to_string(step) + ": " + detail),
        phase_(phase),
        step_(step) {}

  const std::string& phase() const noexcept { return phase_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::string phase_;
  std::size_t step_;
};

/// Malformed IDX file; carries the byte offset at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t offset, const std::string& detail)
      : std::runtime_error(path + " (byte " + std::to_string(offset) + "): " + detail),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid or incomplete run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint cannot be read back (bad magic, version, architecture).
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eqprop
