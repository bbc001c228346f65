#pragma once

#include <stdexcept>
#include <string>

namespace dynlab {

// Shape or length mismatch between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scalar argument outside its documented domain.
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Input violates a precondition that is not a plain shape problem
// (e.g. a label row that is not a probability distribution).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed file contents. The message carries the byte offset.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dynlab
