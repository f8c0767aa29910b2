#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wisdom {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar or structural parameter is out of its allowed range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (e.g. log of 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller violated a usage contract (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A training phase failed; the message carries the epoch and phase.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecompositionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ReconstructionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace wisdom
