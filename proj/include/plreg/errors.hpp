#pragma once

#include <stdexcept>
#include <string>

namespace plreg {

// Incompatible tensor shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside an operation's mathematical domain (e.g. log of a non-positive value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller violated a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid sizes, hyper-parameters or experiment settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse such as calling backward on a non-scalar node.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Training produced a non-finite value and had to stop.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plreg
