#pragma once

#include <stdexcept>
#include <string>

namespace bmask {

/// Argument outside the mathematical domain of an operation (e.g. a masking
/// prior at 0 where log(pi) is required).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A linear system (Omega, X^T X, ...) is rank-deficient beyond the
/// conditioning tolerance.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The closed-form noise variance collapsed to zero (exact fit).
class DegenerateNoiseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bmask
