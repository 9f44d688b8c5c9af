#pragma once

#include "robustpls/linalg.hpp"
#include "robustpls/rng.hpp"
#include "robustpls/types.hpp"

#include <Eigen/QR>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace robustpls {

enum class Algorithm { plsr, pmcr };

inline const char* to_string(Algorithm a) { return a == Algorithm::plsr ? "plsr" : "pmcr"; }

/// One extracted factor: projectors w (N) and c (M), scores t = X_s w and
/// u = Y_s c, loading p (N) and regression scalar b.
template <typename Scalar>
struct LatentFactor {
  Vector<Scalar> w;
  Vector<Scalar> c;
  Vector<Scalar> t;
  Vector<Scalar> u;
  Vector<Scalar> p;
  Scalar b{};
};

/// Relative Frobenius norm under which a residual matrix counts as exhausted.
inline constexpr double kResidualStopRatio = 1e-12;

template <typename Scalar>
struct FactorModel {
  Algorithm algorithm = Algorithm::plsr;
  std::vector<LatentFactor<Scalar>> factors;
  Matrix<Scalar> h;  // N x M, Y_hat = X H
  std::optional<RowVector<Scalar>> x_mean;
  std::optional<RowVector<Scalar>> y_mean;
  Index requested_factors = 0;
  std::string stop_reason;  // empty when all requested factors were extracted
  std::string failure;      // error tag when a partial fit was kept (not serialized)

  Index num_factors() const { return static_cast<Index>(factors.size()); }
  Index inputs() const { return h.rows(); }
  Index outputs() const { return h.cols(); }
  bool centered() const { return x_mean.has_value(); }
};

struct FitOptions {
  bool center = false;
};

/// Least-squares loading p = X_s' t / (t' t).
template <typename DerivedX, typename DerivedT>
Vector<typename DerivedX::Scalar> ls_loading(const Eigen::MatrixBase<DerivedX>& x_s,
                                             const Eigen::MatrixBase<DerivedT>& t) {
  const auto tt = t.squaredNorm();
  if (!(tt > 0)) throw DegenerateError("ls_loading: score vector is zero");
  return x_s.transpose() * t / tt;
}

/// Least-squares regression scalar b = u' t / (t' t).
template <typename DerivedU, typename DerivedT>
typename DerivedU::Scalar ls_scalar(const Eigen::MatrixBase<DerivedU>& u,
                                    const Eigen::MatrixBase<DerivedT>& t) {
  const auto tt = t.squaredNorm();
  if (!(tt > 0)) throw DegenerateError("ls_scalar: score vector is zero");
  return u.dot(t) / tt;
}

/// In-place deflation X_s -= t p', Y_s -= b t c'.
template <typename Scalar>
void deflate_in_place(Matrix<Scalar>& x_s, Matrix<Scalar>& y_s, const LatentFactor<Scalar>& f) {
  x_s.noalias() -= f.t * f.p.transpose();
  y_s.noalias() -= (f.b * f.t) * f.c.transpose();
}

template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> deflate(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s,
                                                  const LatentFactor<Scalar>& f) {
  std::pair<Matrix<Scalar>, Matrix<Scalar>> out{x_s, y_s};
  deflate_in_place(out.first, out.second, f);
  return out;
}

/// H = pinv(P') B C' from the first `count` factors (all when count < 0).
template <typename Scalar>
Matrix<Scalar> assemble_coefficients(const std::vector<LatentFactor<Scalar>>& factors, Index n_inputs,
                                     Index n_outputs, Index count = -1) {
  const Index s = count < 0 ? static_cast<Index>(factors.size())
                            : std::min<Index>(count, static_cast<Index>(factors.size()));
  if (s == 0) return Matrix<Scalar>::Zero(n_inputs, n_outputs);
  Matrix<Scalar> p(n_inputs, s);
  Matrix<Scalar> bc(s, n_outputs);
  for (Index k = 0; k < s; ++k) {
    const auto& f = factors[static_cast<std::size_t>(k)];
    p.col(k) = f.p;
    bc.row(k) = f.b * f.c.transpose();
  }
  return pseudo_inverse(p.transpose()) * bc;
}

namespace detail {

template <typename Scalar>
bool residual_exhausted(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, Scalar x0, Scalar y0) {
  const Scalar r = Scalar(kResidualStopRatio);
  return !(x_s.norm() > r * x0) || !(y_s.norm() > r * y0);
}

template <typename Scalar>
void apply_sign_convention(LatentFactor<Scalar>& f) {
  if (!needs_sign_flip(f.w)) return;
  f.w = -f.w;
  f.c = -f.c;
  f.t = -f.t;
  f.u = -f.u;
  f.p = -f.p;
}

template <typename Scalar, typename DX, typename DY>
void prepare_fit(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y, const FitOptions& opt,
                 Matrix<Scalar>& x_s, Matrix<Scalar>& y_s, FactorModel<Scalar>& model) {
  check_data_matrix(x, "x");
  check_data_matrix(y, "y");
  if (x.rows() != y.rows())
    throw SpecificationError("x has " + std::to_string(x.rows()) + " rows but y has " +
                             std::to_string(y.rows()));
  x_s = x;
  y_s = y;
  if (opt.center) {
    model.x_mean = x_s.colwise().mean();
    model.y_mean = y_s.colwise().mean();
    x_s.rowwise() -= *model.x_mean;
    y_s.rowwise() -= *model.y_mean;
  }
}

inline void check_factor_count(Index s, Index n, Index l) {
  if (s < 1 || s > std::min(n, l))
    throw SpecificationError("factor count " + std::to_string(s) + " outside [1, min(N, L)] = [1, " +
                             std::to_string(std::min(n, l)) + "]");
}

}  // namespace detail

/// Conventional PLSR with SVD projectors and least-squares loadings.
template <typename DX, typename DY>
FactorModel<typename DX::Scalar> plsr_fit(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                          Index s, const FitOptions& opt = {}) {
  using Scalar = typename DX::Scalar;
  detail::check_factor_count(s, x.cols(), x.rows());
  FactorModel<Scalar> model;
  model.algorithm = Algorithm::plsr;
  model.requested_factors = s;
  Matrix<Scalar> x_s, y_s;
  detail::prepare_fit(x, y, opt, x_s, y_s, model);
  const Scalar x0 = x_s.norm();
  const Scalar y0 = y_s.norm();

  for (Index k = 0; k < s; ++k) {
    if (detail::residual_exhausted(x_s, y_s, x0, y0)) {
      model.stop_reason = "residual exhausted before factor " + std::to_string(k + 1);
      break;
    }
    const Matrix<Scalar> cross = x_s.transpose() * y_s;
    const auto pair = dominant_svd_pair(cross);
    if (!pair) {
      model.stop_reason = "zero cross-covariance at factor " + std::to_string(k + 1);
      break;
    }
    LatentFactor<Scalar> f;
    f.w = pair->left;
    f.c = pair->right;
    f.t = x_s * f.w;
    f.u = y_s * f.c;
    if (!(f.t.squaredNorm() > 0)) {
      model.stop_reason = "zero score vector at factor " + std::to_string(k + 1);
      break;
    }
    f.p = ls_loading(x_s, f.t);
    f.b = ls_scalar(f.u, f.t);
    deflate_in_place(x_s, y_s, f);
    model.factors.push_back(std::move(f));
  }
  model.h = assemble_coefficients(model.factors, x.cols(), y.cols());
  return model;
}

template <typename Scalar, typename DX>
Matrix<Scalar> predict(const FactorModel<Scalar>& model, const Eigen::MatrixBase<DX>& x) {
  if (x.cols() != model.inputs())
    throw SpecificationError("predict: x has " + std::to_string(x.cols()) + " columns, model expects " +
                             std::to_string(model.inputs()));
  if (!model.centered()) return x * model.h;
  Matrix<Scalar> y_hat = (x.rowwise() - *model.x_mean) * model.h;
  y_hat.rowwise() += *model.y_mean;
  return y_hat;
}

/// Predictions of the prefix models with 1..num_factors factors.
///
/// Uses P = Q R (Householder, no pivoting) so that every prefix P_s = Q_s R_s
/// and pinv(P_s') = Q_s R_s^{-T}; falls back to assemble_coefficients for a
/// prefix whose R_s is numerically singular.
template <typename Scalar, typename DX>
std::vector<Matrix<Scalar>> prefix_predictions(const FactorModel<Scalar>& model,
                                               const Eigen::MatrixBase<DX>& x) {
  if (x.cols() != model.inputs())
    throw SpecificationError("prefix_predictions: column count does not match the model");
  const Index s = model.num_factors();
  const Index n = model.inputs();
  const Index m = model.outputs();
  std::vector<Matrix<Scalar>> out;
  out.reserve(static_cast<std::size_t>(s));
  if (s == 0) return out;

  Matrix<Scalar> xc = x;
  if (model.centered()) xc.rowwise() -= *model.x_mean;

  Matrix<Scalar> p(n, s);
  Matrix<Scalar> bc(s, m);
  for (Index k = 0; k < s; ++k) {
    const auto& f = model.factors[static_cast<std::size_t>(k)];
    p.col(k) = f.p;
    bc.row(k) = f.b * f.c.transpose();
  }
  Eigen::HouseholderQR<Matrix<Scalar>> qr(p);
  const Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(n, std::min(n, s));
  const Matrix<Scalar> r = qr.matrixQR().topRows(std::min(n, s)).template triangularView<Eigen::Upper>();
  const Matrix<Scalar> z = xc * q;
  const Scalar diag_scale = r.diagonal().cwiseAbs().maxCoeff();
  const Scalar tol = static_cast<Scalar>(std::max(n, s)) * std::numeric_limits<Scalar>::epsilon() * diag_scale;

  bool well_conditioned = true;
  for (Index k = 1; k <= s; ++k) {
    Matrix<Scalar> y_hat;
    if (k <= n && std::abs(r(k - 1, k - 1)) <= tol) well_conditioned = false;
    if (well_conditioned && k <= n) {
      const Matrix<Scalar> coef = r.topLeftCorner(k, k).transpose().template triangularView<Eigen::Lower>().solve(
          bc.topRows(k));
      y_hat = z.leftCols(k) * coef;
    } else {
      y_hat = xc * assemble_coefficients(model.factors, n, m, k);
    }
    if (model.centered()) y_hat.rowwise() += *model.y_mean;
    out.push_back(std::move(y_hat));
  }
  return out;
}

struct CrossValidationResult {
  Index best = 1;
  std::vector<double> mean_rmse;  // index s-1, validation RMSE averaged over folds
};

/// Root-mean-square of the Euclidean row distances.
template <typename DA, typename DB>
typename DA::Scalar row_rmse(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  using std::sqrt;
  return sqrt((a - b).rowwise().squaredNorm().mean());
}

/// K-fold cross-validated choice of the PLSR factor count.
///
/// Rows are shuffled with a seeded permutation and split into contiguous
/// blocks (sizes differ by at most one). For s = 1..min(s_max, N, smallest
/// training size) the validation RMSE is averaged over folds; the smallest
/// s attaining the minimum wins. Folds whose fit stopped early reuse their
/// last model for larger s.
template <typename DX, typename DY>
CrossValidationResult select_num_factors(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                         Index s_max, Index folds, std::uint64_t seed,
                                         const FitOptions& opt = {}) {
  using Scalar = typename DX::Scalar;
  const Index l = x.rows();
  if (s_max < 1) throw SpecificationError("select_num_factors: s_max must be >= 1");
  if (folds < 2) throw SpecificationError("select_num_factors: folds must be >= 2");
  if (l < folds)
    throw SpecificationError("select_num_factors: " + std::to_string(l) + " observations for " +
                             std::to_string(folds) + " folds");
  if (y.rows() != l) throw SpecificationError("select_num_factors: x and y row counts differ");

  Rng rng(derive_seed(seed, "cv-shuffle"));
  const auto order = rng.permutation(static_cast<std::size_t>(l));
  const Index base = l / folds;
  const Index extra = l % folds;
  const Index smallest_train = l - (base + (extra ? 1 : 0));
  const Index s_hi = std::min({s_max, x.cols(), smallest_train});

  std::vector<double> total(static_cast<std::size_t>(s_hi), 0.0);
  Index start = 0;
  for (Index f = 0; f < folds; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    std::vector<Index> train_rows, val_rows;
    for (Index i = 0; i < l; ++i) {
      const auto row = static_cast<Index>(order[static_cast<std::size_t>(i)]);
      (i >= start && i < start + size ? val_rows : train_rows).push_back(row);
    }
    start += size;
    const Matrix<Scalar> xt = x(train_rows, Eigen::all);
    const Matrix<Scalar> yt = y(train_rows, Eigen::all);
    const Matrix<Scalar> xv = x(val_rows, Eigen::all);
    const Matrix<Scalar> yv = y(val_rows, Eigen::all);

    const auto model = plsr_fit(xt, yt, s_hi, opt);
    std::vector<Matrix<Scalar>> preds = prefix_predictions(model, xv);
    if (preds.empty()) preds.push_back(predict(model, xv));
    for (Index s = 1; s <= s_hi; ++s) {
      const auto& yh = preds[static_cast<std::size_t>(std::min<Index>(s, static_cast<Index>(preds.size())) - 1)];
      total[static_cast<std::size_t>(s - 1)] += static_cast<double>(row_rmse(yh, yv));
    }
  }

  CrossValidationResult res;
  res.mean_rmse.resize(total.size());
  for (std::size_t i = 0; i < total.size(); ++i) res.mean_rmse[i] = total[i] / static_cast<double>(folds);
  res.best = 1;
  for (Index s = 2; s <= s_hi; ++s)
    if (res.mean_rmse[static_cast<std::size_t>(s - 1)] < res.mean_rmse[static_cast<std::size_t>(res.best - 1)])
      res.best = s;
  return res;
}

}  // namespace robustpls
