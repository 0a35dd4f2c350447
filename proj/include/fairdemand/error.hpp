#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fairdemand {

// Bad input: malformed files, out-of-range configuration, violated
// preconditions. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while computing: non-finite losses, singular systems. Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the differentiation engine; carries the offending node.
class GraphError : public ValidationError {
 public:
  GraphError(std::uint32_t node, const std::string& what)
      : ValidationError("node " + std::to_string(node) + ": " + what), node_(node) {}
  std::uint32_t node() const { return node_; }

 private:
  std::uint32_t node_;
};

class NonFiniteError : public RuntimeFailure {
 public:
  NonFiniteError(std::uint32_t node, const std::string& what)
      : RuntimeFailure("node " + std::to_string(node) + ": " + what), node_(node) {}
  std::uint32_t node() const { return node_; }

 private:
  std::uint32_t node_;
};

}  // namespace fairdemand
