#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hara {

// Input that breaks a documented precondition (tree shape, parameter range,
// sign conditions on terminal data).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A portfolio rate or wealth path left the region where wealth is positive.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A per-node solve failed to produce an interior optimum.
class SolverError : public std::runtime_error {
 public:
  SolverError(std::size_t node, const std::string& what)
      : std::runtime_error(what), node_(node) {}

  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

}  // namespace hara
