#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace igauss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised when a caller breaks a documented precondition (dimension mismatch,
// invalid parameter range, non-unit direction, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical failure inside an algorithm that should not occur for valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

inline void require_dim(Eigen::Index got, Eigen::Index expected, const char* what) {
  if (got != expected) {
    throw ContractViolation(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                            ", expected " + std::to_string(expected) + ")");
  }
}

}  // namespace igauss
