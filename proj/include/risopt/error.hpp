#pragma once

#include <stdexcept>
#include <string>

namespace risopt {

/// Shapes of two operands disagree (config vs geometry, tensor vs layer chain).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on argument values was violated.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Power of an all-zero signal was requested (log of zero).
class DegeneratePowerError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A tensor or weights file is malformed or truncated.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

}  // namespace risopt
