#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace sgdlab {

/// Real-valued function sampled on a uniform spatial grid.
using GridFunction = Eigen::VectorXd;

/// Raised when user-supplied parameters violate an operation's preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a covariance kernel fails its positive-semidefiniteness check.
class InvalidKernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sgdlab
