#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace robustpls {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Rows are observations, columns are variables.
using DataMatrix = Matrix<double>;
using DataVector = Vector<double>;

using Index = Eigen::Index;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or shape mismatch supplied by the caller.
struct SpecificationError : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
struct DomainError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

/// A score, residual, or weight set collapsed to zero.
struct DegenerateError : Error {
  using Error::Error;
};

struct OptimizationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Elementwise exp through std::exp. Eigen's vectorized exp clamps its
/// argument, so kernel values of gross outliers would stay near 5e-309 instead
/// of underflowing to 0.
template <typename Derived>
auto exact_exp(const Eigen::ArrayBase<Derived>& a) {
  return a.unaryExpr([](typename Derived::Scalar v) {
    using std::exp;
    return exp(v);
  });
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

/// Enforces the data-matrix invariants: at least one row and column, every entry finite.
template <typename Derived>
void check_data_matrix(const Eigen::MatrixBase<Derived>& m, const std::string& name) {
  if (m.rows() < 1 || m.cols() < 1)
    throw SpecificationError(name + ": matrix must have at least one row and one column");
  if (!all_finite(m)) throw SpecificationError(name + ": matrix contains NaN or Inf");
}

}  // namespace robustpls
