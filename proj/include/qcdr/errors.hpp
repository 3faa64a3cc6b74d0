#pragma once

#include <stdexcept>
#include <string>

namespace qcdr {

// Input the caller can fix: bad flags, bad config values, malformed requests.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Tensor or image shapes that do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the domain of a mathematical function.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Missing, empty, or inconsistent datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked on an object in the wrong lifecycle stage.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training diverged (non-finite loss) or could not continue.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qcdr
