#pragma once

#include <stdexcept>
#include <string>

namespace jepa3d {

// Shape or configuration mismatch detected before any computation runs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid user configuration: ranges, counts, unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or missing input data (clouds, feature files, datasets).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file contents. Carries the position of the first offending token:
// a 1-based line for text formats, a byte offset for binary ones.
class ParseError : public DataError {
 public:
  enum class Unit { line, byte };

  ParseError(const std::string& source, Unit unit, std::size_t position, const std::string& what)
      : DataError(source + (unit == Unit::line ? ":" + std::to_string(position) + ": "
                                               : " @byte " + std::to_string(position) + ": ") +
                  what),
        unit_(unit),
        position_(position) {}

  Unit unit() const { return unit_; }
  std::size_t position() const { return position_; }

 private:
  Unit unit_;
  std::size_t position_;
};

// Checkpoint integrity or version problems.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jepa3d
