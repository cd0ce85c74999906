#pragma once

#include <stdexcept>
#include <string>

namespace retrobranch {

// Invalid user-supplied parameters (generator specs, configs, CLI values).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Generator could not build an instance from an otherwise valid spec.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed instance / checkpoint / config text.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Numerical breakdown inside the simplex.
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A branching policy produced something unusable (non-candidate, NaN Q).
struct PolicyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoint written by a different encoder / architecture version.
struct IncompatibleCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Divergence or non-finite values during learning.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace retrobranch
