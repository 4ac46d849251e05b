#pragma once

#include <stdexcept>
#include <string>

namespace gridsite {

enum class ErrorKind {
  Schema,       // malformed or mistyped input
  Topology,     // disconnected network, missing or duplicate slack
  Reference,    // dangling node id or absent phase
  Degenerate,   // zero-admittance branch, inverted bounds, empty sets
  Infeasible,   // structurally infeasible model detected before solving
  Numerical,    // singular systems, non-convergence that cannot be reported as a result
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gridsite
