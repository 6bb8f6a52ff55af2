#pragma once

#include <stdexcept>
#include <string>

namespace smokenet {

// Bad user input: flags, names, counts, ranges.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Unreadable or malformed files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches and violated preconditions between components.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace smokenet
