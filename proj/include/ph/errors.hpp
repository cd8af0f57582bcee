#pragma once

#include <stdexcept>
#include <string>

namespace ph {

// Error taxonomy. Each maps to one failure class the contracts talk about,
// so tests can assert the category and callers can decide what is retryable.

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrozenParameterError : std::logic_error {
  using std::logic_error::logic_error;
};

struct CheckPreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotFoundError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CorruptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ph
