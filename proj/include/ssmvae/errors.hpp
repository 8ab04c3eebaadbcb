#pragma once

#include <stdexcept>
#include <string>

namespace ssmvae {

// Caller broke a documented precondition (shape, sign, range).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// A moment that does not exist for the requested parameters (dof <= 2).
class UndefinedMoment : public std::domain_error {
 public:
  explicit UndefinedMoment(const std::string& what) : std::domain_error(what) {}
};

// Parameters outside the regime the closed forms or estimators support.
class UnsupportedRegime : public std::domain_error {
 public:
  explicit UnsupportedRegime(const std::string& what) : std::domain_error(what) {}
};

// Dataset scenario that cannot be realised (empty classes, impossible masks).
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// A gradient, parameter or loss component became NaN/Inf.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ssmvae
