#pragma once

#include <stdexcept>
#include <string>

namespace bartspl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An iterative fit did not converge (e.g. separated logistic regression).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The estimator cannot produce the requested quantity from this sample.
class EstimationError : public Error {
 public:
  using Error::Error;
};

}  // namespace bartspl
