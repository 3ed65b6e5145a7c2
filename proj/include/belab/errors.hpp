#pragma once

#include <stdexcept>
#include <string>

namespace belab {

// Exit-status classes used by the runner: config 2, hypothesis 3, solver 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct HypothesisViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace belab
