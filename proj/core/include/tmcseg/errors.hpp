#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tmcseg {

/// Violated precondition (bad dimensions, out-of-range argument, wrong model kind).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand shapes do not conform for an autodiff primitive.
class ShapeError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A primitive was applied outside its numeric domain, e.g. log of a non-positive value.
class NumericDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input file. Carries the byte offset at which parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace tmcseg
