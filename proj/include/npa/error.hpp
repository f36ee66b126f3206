// Error reporting shared by every module of the library.
#pragma once

#include <stdexcept>
#include <string>

namespace npa {

/// Classifies every failure the library can surface to a caller.
enum class ErrorKind {
  Syntax,               ///< malformed program or S-expression text
  InvalidInput,         ///< well-formed input violating a structural rule
  UnknownAction,        ///< a domain cannot interpret an action text
  UnsupportedCondition, ///< a domain cannot interpret a condition
  SubtractUndefined,    ///< a ⊖ b requested with b not below a
  SolveFailure,         ///< a linear-recursion strategy could not solve
  NonMonotoneRound,     ///< a Newton round broke the sandwich ordering
  NumericalInstability, ///< the simplex kept hitting tiny pivots
  NdetUnsupported,      ///< simulation asked to run a nondeterministic program
};

/// Human-readable name of an error kind, used in reports and messages.
const char *errorKindName(ErrorKind kind);

/// The single exception type thrown by the library.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message);
  Error(ErrorKind kind, const std::string &message, int line, int column);

  ErrorKind kind() const { return kind_; }
  /// Source line of the failure, or 0 when not tied to a location.
  int line() const { return line_; }
  int column() const { return column_; }

private:
  ErrorKind kind_;
  int line_ = 0;
  int column_ = 0;
};

} // namespace npa
