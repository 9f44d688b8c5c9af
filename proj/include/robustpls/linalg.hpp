#pragma once

#include "robustpls/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace robustpls {

template <typename Scalar>
struct SingularTriple {
  Vector<Scalar> left;   // length rows
  Vector<Scalar> right;  // length cols
  Scalar value{};
};

/// Index of the largest-magnitude entry (first one on ties).
template <typename Derived>
Index largest_magnitude_index(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  return best;
}

/// True when the pair (w, c) must be flipped jointly so that the
/// largest-magnitude component of w is positive.
template <typename Derived>
bool needs_sign_flip(const Eigen::MatrixBase<Derived>& w) {
  return w.size() > 0 && w(largest_magnitude_index(w)) < 0;
}

/// Moore-Penrose pseudo-inverse. Singular values at or below
/// max(rows, cols) * eps * s_max are treated as zero.
template <typename Derived>
Matrix<typename Derived::Scalar> pseudo_inverse(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0) return Matrix<Scalar>::Zero(m.cols(), m.rows());
  Eigen::BDCSVD<Matrix<Scalar>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const Scalar s_max = s.size() ? s(0) : Scalar(0);
  const Scalar tol = static_cast<Scalar>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<Scalar>::epsilon() * s_max;
  Vector<Scalar> inv = Vector<Scalar>::Zero(s.size());
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > tol) inv(i) = Scalar(1) / s(i);
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Leading singular triple of m with the joint sign convention applied.
/// Returns nullopt when m is numerically zero.
template <typename Derived>
std::optional<SingularTriple<typename Derived::Scalar>> dominant_svd_pair(
    const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.size() == 0 || !(m.cwiseAbs().maxCoeff() > Scalar(0))) return std::nullopt;

  SingularTriple<Scalar> out;
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<Matrix<Scalar>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU().col(0);
    out.right = svd.matrixV().col(0);
    out.value = svd.singularValues()(0);
  } else {
    Eigen::BDCSVD<Matrix<Scalar>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.left = svd.matrixU().col(0);
    out.right = svd.matrixV().col(0);
    out.value = svd.singularValues()(0);
  }
  if (!(out.value > Scalar(0))) return std::nullopt;
  if (needs_sign_flip(out.left)) {
    out.left = -out.left;
    out.right = -out.right;
  }
  return out;
}

/// Value of z' A z + d' z.
template <typename DerivedA, typename DerivedD, typename DerivedZ>
typename DerivedA::Scalar quadratic_value(const Eigen::MatrixBase<DerivedA>& a,
                                          const Eigen::MatrixBase<DerivedD>& d,
                                          const Eigen::MatrixBase<DerivedZ>& z) {
  return z.dot(a * z) + d.dot(z);
}

/// Global maximizer of z' A z + d' z on the unit sphere, A symmetric and
/// possibly indefinite.
///
/// Stationary points satisfy (lambda I - A) z = d / 2; the maximizer has
/// lambda >= mu_max (largest eigenvalue of A). In the eigenbasis
/// z_i = g_i / (2 (lambda - mu_i)) with g = Q' d, and lambda is the root of
/// sum_i g_i^2 / (4 (lambda - mu_i)^2) = 1 on (mu_max, mu_max + |g| / 2],
/// found by bisection. When g vanishes on the top eigenspace and the
/// remaining components have norm below one at lambda = mu_max (the hard
/// case), the deficit is filled along the top eigenvector.
template <typename Scalar>
Vector<Scalar> maximize_on_sphere(const Matrix<Scalar>& a, const Vector<Scalar>& d) {
  const Index n = a.rows();
  if (n == 1) {
    Vector<Scalar> z(1);
    z(0) = d(0) >= Scalar(0) ? Scalar(1) : Scalar(-1);
    return z;
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(a);
  if (es.info() != Eigen::Success) throw OptimizationError("maximize_on_sphere: eigensolver failed");
  const Vector<Scalar>& mu = es.eigenvalues();  // ascending
  const Matrix<Scalar>& q = es.eigenvectors();
  const Vector<Scalar> g = q.transpose() * d;
  const Scalar mu_max = mu(n - 1);

  const Scalar scale = std::max({std::abs(mu_max), std::abs(mu(0)), g.norm(), Scalar(1e-300)});
  const Scalar gap_tol = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale;

  // Top eigenspace and the projection of g on it.
  Scalar g_top_sq = 0;
  Index top_begin = n - 1;
  while (top_begin > 0 && mu_max - mu(top_begin - 1) <= gap_tol) --top_begin;
  for (Index i = top_begin; i < n; ++i) g_top_sq += g(i) * g(i);

  const auto norm_sq_at = [&](Scalar lambda) {
    Scalar s = 0;
    for (Index i = 0; i < n; ++i) {
      const Scalar den = Scalar(2) * (lambda - mu(i));
      s += (g(i) * g(i)) / (den * den);
    }
    return s;
  };

  Vector<Scalar> y(n);
  if (std::sqrt(g_top_sq) <= gap_tol) {
    Scalar rest = 0;
    for (Index i = 0; i < top_begin; ++i) {
      const Scalar den = Scalar(2) * (mu_max - mu(i));
      rest += (g(i) * g(i)) / (den * den);
    }
    if (rest <= Scalar(1)) {
      for (Index i = 0; i < top_begin; ++i) y(i) = g(i) / (Scalar(2) * (mu_max - mu(i)));
      for (Index i = top_begin; i < n; ++i) y(i) = 0;
      y(n - 1) = std::sqrt(std::max(Scalar(0), Scalar(1) - rest));
      return q * y;
    }
  }

  Scalar lo = mu_max;
  Scalar hi = mu_max + g.norm() / Scalar(2) + gap_tol;
  for (int it = 0; it < 200; ++it) {
    const Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mid <= lo || mid >= hi) break;
    if (norm_sq_at(mid) > Scalar(1))
      lo = mid;
    else
      hi = mid;
  }
  const Scalar lambda = hi;
  for (Index i = 0; i < n; ++i) {
    const Scalar den = Scalar(2) * (lambda - mu(i));
    y(i) = den != Scalar(0) ? g(i) / den : Scalar(0);
  }
  Vector<Scalar> z = q * y;
  const Scalar nz = z.norm();
  if (!(nz > Scalar(0)) || !std::isfinite(nz)) {
    z = q.col(n - 1);
  } else {
    z /= nz;
  }
  return z;
}

}  // namespace robustpls
