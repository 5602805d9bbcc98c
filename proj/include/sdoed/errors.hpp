#ifndef SDOED_ERRORS_HPP
#define SDOED_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sdoed {

/// Caller broke a documented precondition (dimension mismatch, bad range, ...).
class ContractViolation : public std::invalid_argument {
public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// A model or constraint produced a non-finite value inside its admissible set.
class EvaluationError : public std::runtime_error {
public:
  explicit EvaluationError(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration file is missing, malformed, or out of documented ranges.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver failed to reach its tolerance. Diagnostics are attached
/// by the thrower (message carries the achieved residuals and iteration count).
class SolveError : public std::runtime_error {
public:
  explicit SolveError(const std::string& what) : std::runtime_error(what) {}
};

/// Problem instance exceeds the certified scale of an exact algorithm and the
/// caller disabled the heuristic fallback.
class CapacityError : public std::runtime_error {
public:
  explicit CapacityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sdoed

#endif
