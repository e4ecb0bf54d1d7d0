#pragma once

#include <stdexcept>
#include <string>

namespace redi {

// Every error raised by the library derives from Error. The two branches
// separate bad input (usage/validation) from inputs that are well formed but
// mathematically or computationally infeasible.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyCouplingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Dense enumeration or support size would exceed a configured cap.
class CapError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

// Conditioning on a state the probability path never visits.
class OffPathError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

class ZeroMassError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

class InconsistentBridgeError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

// KL(p || q) with p not absolutely continuous w.r.t. q.
class DivergenceError : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

}  // namespace redi
