#pragma once

#include <stdexcept>
#include <string>

namespace rationlab {

// Bad inputs: malformed curves, infeasible sets, schema violations. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A solver failed to converge or an optimization is structurally stuck. CLI exit code 3.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

// Two unit costs coincide within tolerance; the greedy fill is not unique and the
// caller must decide how to break the tie.
class TieError : public ValidationError {
 public:
  explicit TieError(const std::string& msg) : ValidationError(msg) {}
};

// Supply equals a subset sum of caps within tolerance; the cutoff market is ambiguous.
class DegenerateError : public ValidationError {
 public:
  explicit DegenerateError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace rationlab
