#pragma once

#include <stdexcept>
#include <string>

namespace pflab {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Iterative numerics failed (root finder, sampler divergence, ...).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Problem size beyond what an exhaustive routine supports.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// API called out of order.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite loss or gradient during optimisation.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pflab
