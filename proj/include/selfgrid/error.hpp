#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace selfgrid {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (network file, scenario file, message line).
class ParseError : public Error {
public:
  using Error::Error;
};

/// A model that parsed but violates one or more invariants.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

private:
  std::vector<std::string> issues_;
};

/// Singular Jacobian or other breakdown of a numerical routine.
class NumericalError : public Error {
public:
  using Error::Error;
};

/// The epsilon ladder has no finer value left.
class LadderExhausted : public Error {
public:
  using Error::Error;
};

/// A caller asked for something the current state does not allow
/// (unavailable DG, adjustment past the surplus bound, bad argument).
class InvalidArgument : public Error {
public:
  using Error::Error;
};

} // namespace selfgrid
