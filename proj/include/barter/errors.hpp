#pragma once

#include <stdexcept>

namespace barter {

// Bad problem data supplied by the caller; message names the violated rule.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A transfer breaking capacity or have/wish membership.
struct InvalidTransferError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fractional value where an integral one is required.
struct NonIntegralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input outside an operation's stated domain (e.g. capacity overflow).
struct InfeasibleInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Instance beyond the exhaustive oracle's enumeration limits.
struct TooLargeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Partition reduction needs an even total.
struct OddSumError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Broken internal invariant. Indicates a bug, never bad input.
struct DefectError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace barter
