#pragma once

// Partial maximum correntropy regression.
//
// Each factor replaces the three least-squares terms of PLSR's projector
// problem by Gaussian kernels of the input reconstruction error, the output
// reconstruction error and the latent prediction error:
//
//   J(w, c) = sum_l g_sx(|x_l - x_l w w'|) + g_sy(|y_l - y_l c c'|) + g_sr(x_l w - y_l c)
//
// maximized over unit w, c by half-quadratic iterations. The auxiliary step
// sets alpha_l = -exp(-e_x,l^2 / 2 sx^2) (and beta, gamma alike); with the
// auxiliaries fixed the objective becomes the quadratic surrogate
//
//   Jp(w, c) = sum_l a_l (x_l w)^2 + e_l (y_l c)^2 + f_l (x_l w)(y_l c),
//   a_l = gamma_l / 2sr^2 - alpha_l / 2sx^2,
//   e_l = gamma_l / 2sr^2 - beta_l / 2sy^2,
//   f_l = -gamma_l / sr^2,
//
// which touches J at the expansion point and lies below it elsewhere, so any
// step that does not decrease Jp does not decrease J. The projector step
// maximizes Jp over w with c fixed and then over c with w fixed, each a
// sphere-constrained quadratic (maximize_on_sphere).
//
// Loadings and regression scalars maximize sum_l g(x_l - t_l p) and
// sum_l g(u_l - t_l b). Setting the gradient to zero gives the fixed-point
// (reweighted least squares) updates
//
//   p <- sum_l phi_l t_l x_l' / sum_l phi_l t_l^2,   phi_l = g_sp(|x_l - t_l p|)
//   b <- sum_l phi_l t_l u_l  / sum_l phi_l t_l^2,   phi_l = g_sb(u_l - t_l b)
//
// started from the least-squares solutions. The weights only enter as a ratio,
// so they are computed relative to the smallest residual to avoid underflow.

#include "robustpls/correntropy.hpp"
#include "robustpls/linalg.hpp"
#include "robustpls/plsr.hpp"
#include "robustpls/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace robustpls {

struct PmcrConfig {
  Index factors = 1;
  /// HQ stopping threshold on the objective change; 1e-6 * L when unset.
  std::optional<double> varsigma;
  int max_hq_iters = 50;
  int max_fp_iters = 200;
  double fp_tol = 1e-10;
  /// Silverman variant: false reads the rule's value as sigma^2, true as sigma.
  bool silverman_classic = false;
  /// Replaces the per-factor Silverman bandwidths (used to probe the least-squares limit).
  std::optional<KernelBandwidths<double>> bandwidth_override;
  bool center = false;
  /// Start the loading/scalar fixed point from the best of the least-squares
  /// solution and the single-observation exact fits (false: least squares only).
  bool multistart = true;
  /// On a numerical failure after the first factor, return the factors fitted
  /// so far (failure recorded in the model) instead of throwing.
  bool keep_partial = false;
  /// Extra HQ runs per factor started from single observations (w along x_l,
  /// c along y_l), best initial objective first. The run with the largest final
  /// objective is kept. 0 runs from the least-squares pair only.
  Index projector_starts = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (factors < 1) throw SpecificationError("pmcr: factor count must be >= 1");
    if (varsigma && !(*varsigma > 0)) throw SpecificationError("pmcr: varsigma must be positive");
    if (max_hq_iters < 0 || max_fp_iters < 1)
      throw SpecificationError("pmcr: iteration caps must be >= 0 (HQ) and >= 1 (fixed point)");
    if (!(fp_tol > 0)) throw SpecificationError("pmcr: fp_tol must be positive");
    if (projector_starts < 0) throw SpecificationError("pmcr: projector_starts must be >= 0");
    if (bandwidth_override && !bandwidth_override->valid())
      throw SpecificationError("pmcr: bandwidth override must be positive and finite");
  }
};

/// Auxiliary variables of one half-quadratic step. The exponents
/// (alpha = -exp(-exp_alpha), ...) are kept so the projector step can work
/// with rescaled auxiliaries when the raw ones underflow.
template <typename Scalar>
struct HQState {
  Vector<Scalar> alpha;
  Vector<Scalar> beta;
  Vector<Scalar> gamma;
  Vector<Scalar> exp_alpha;
  Vector<Scalar> exp_beta;
  Vector<Scalar> exp_gamma;
};

struct FactorDiagnostics {
  Index factor = 0;  // 1-based
  int hq_iterations = 0;
  bool converged = false;
  bool stalled = false;
  /// Observation the kept HQ run started from (0-based); -1 for the least-squares pair.
  Index start_observation = -1;
  std::vector<double> objective_trace;
  KernelBandwidths<double> bandwidths;
  std::array<bool, 5> bandwidth_floored{};  // x, y, r, p, b
  int loading_iterations = 0;
  int scalar_iterations = 0;
};

namespace detail {

template <typename Derived>
void require_unit(const Eigen::MatrixBase<Derived>& v, const char* what, double tol = 1e-8) {
  using std::abs;
  if (!(abs(v.norm() - 1) <= tol)) throw DomainError(std::string(what) + ": projector is not unit norm");
}

/// Per-row clamped squared reconstruction errors |x_l|^2 - (x_l w)^2.
template <typename DX, typename DW>
Vector<typename DX::Scalar> squared_recon_errors(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& w) {
  using Scalar = typename DX::Scalar;
  const Vector<Scalar> proj = x * w;
  return (x.rowwise().squaredNorm().array() - proj.array().square()).max(Scalar(0)).matrix();
}

/// Upper median; takes its argument by value.
template <typename Scalar>
Scalar median(Vector<Scalar> v) {
  const auto mid = v.begin() + v.size() / 2;
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

template <typename Scalar>
Scalar inv_two_sigma_sq(Scalar s) {
  return Scalar(1) / (Scalar(2) * s * s);
}

/// log(sum_l exp(-z_l)) for z >= 0, stable for large z.
template <typename Scalar>
Scalar log_sum_exp_neg(const Vector<Scalar>& z) {
  using std::exp;
  using std::log;
  const Scalar m = z.minCoeff();
  return -m + log(exact_exp(-(z.array() - m)).sum());
}

}  // namespace detail

/// sqrt(max(0, x x' - x w w' x')) for one observation and a unit projector.
template <typename DR, typename DW>
typename DR::Scalar scalarized_recon_error(const Eigen::MatrixBase<DR>& row, const Eigen::MatrixBase<DW>& proj) {
  using Scalar = typename DR::Scalar;
  using std::sqrt;
  detail::require_unit(proj, "scalarized_recon_error");
  if (row.size() != proj.size()) throw DomainError("scalarized_recon_error: length mismatch");
  const Scalar xw = row.dot(proj);
  return sqrt(std::max(Scalar(0), row.squaredNorm() - xw * xw));
}

/// Kernelized projector objective (value in (0, 3L]).
template <typename Scalar>
Scalar projector_objective(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w,
                           const Vector<Scalar>& c, const KernelBandwidths<Scalar>& bw) {
  const Vector<Scalar> ex = detail::squared_recon_errors(x_s, w);
  const Vector<Scalar> ey = detail::squared_recon_errors(y_s, c);
  const Vector<Scalar> er = x_s * w - y_s * c;
  return exact_exp(-ex.array() * detail::inv_two_sigma_sq(bw.sigma_x)).sum() +
         exact_exp(-ey.array() * detail::inv_two_sigma_sq(bw.sigma_y)).sum() +
         exact_exp(-er.array().square() * detail::inv_two_sigma_sq(bw.sigma_r)).sum();
}

/// Auxiliary step: alpha_l, beta_l, gamma_l at the current projectors.
template <typename Scalar>
HQState<Scalar> hq_update_auxiliaries(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w,
                                      const Vector<Scalar>& c, const KernelBandwidths<Scalar>& bw) {
  detail::require_unit(w, "hq_update_auxiliaries");
  detail::require_unit(c, "hq_update_auxiliaries");
  HQState<Scalar> st;
  st.exp_alpha = detail::squared_recon_errors(x_s, w) * detail::inv_two_sigma_sq(bw.sigma_x);
  st.exp_beta = detail::squared_recon_errors(y_s, c) * detail::inv_two_sigma_sq(bw.sigma_y);
  st.exp_gamma = (x_s * w - y_s * c).array().square().matrix() * detail::inv_two_sigma_sq(bw.sigma_r);
  st.alpha = -exact_exp(-st.exp_alpha.array()).matrix();
  st.beta = -exact_exp(-st.exp_beta.array()).matrix();
  st.gamma = -exact_exp(-st.exp_gamma.array()).matrix();
  return st;
}

/// Coefficients (a, e, f) of the quadratic surrogate, all multiplied by a
/// common positive factor exp(shift) chosen so the largest auxiliary has
/// magnitude one. The maximizer does not depend on that factor.
template <typename Scalar>
struct SurrogateCoefficients {
  Vector<Scalar> a;
  Vector<Scalar> e;
  Vector<Scalar> f;
  Scalar shift{};  // true coefficients = these * exp(-shift)
};

template <typename Scalar>
SurrogateCoefficients<Scalar> surrogate_coefficients(const HQState<Scalar>& st, const KernelBandwidths<Scalar>& bw) {
  const Scalar shift =
      std::min({st.exp_alpha.minCoeff(), st.exp_beta.minCoeff(), st.exp_gamma.minCoeff()});
  const auto al = -exact_exp(-(st.exp_alpha.array() - shift));
  const auto be = -exact_exp(-(st.exp_beta.array() - shift));
  const auto ga = -exact_exp(-(st.exp_gamma.array() - shift));
  SurrogateCoefficients<Scalar> k;
  k.shift = shift;
  k.a = (ga * detail::inv_two_sigma_sq(bw.sigma_r) - al * detail::inv_two_sigma_sq(bw.sigma_x)).matrix();
  k.e = (ga * detail::inv_two_sigma_sq(bw.sigma_r) - be * detail::inv_two_sigma_sq(bw.sigma_y)).matrix();
  k.f = (-ga * (Scalar(2) * detail::inv_two_sigma_sq(bw.sigma_r))).matrix();
  return k;
}

template <typename Scalar>
Scalar surrogate_value(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w,
                       const Vector<Scalar>& c, const SurrogateCoefficients<Scalar>& k) {
  const Vector<Scalar> t = x_s * w;
  const Vector<Scalar> u = y_s * c;
  return (k.a.array() * t.array().square() + k.e.array() * u.array().square() + k.f.array() * t.array() * u.array())
      .sum();
}

/// Surrogate Jp(w, c) in its true scale (may underflow to 0 for tiny auxiliaries).
template <typename Scalar>
Scalar surrogate_objective(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w,
                           const Vector<Scalar>& c, const HQState<Scalar>& st, const KernelBandwidths<Scalar>& bw) {
  const auto k = surrogate_coefficients(st, bw);
  using std::exp;
  return surrogate_value(x_s, y_s, w, c, k) * exp(-k.shift);
}

template <typename Scalar>
struct ProjectorStep {
  Vector<Scalar> w;
  Vector<Scalar> c;
  bool stalled = false;
  Scalar surrogate_before{};  // in the rescaled units of SurrogateCoefficients
  Scalar surrogate_after{};
};

/// Projectors step: alternating sphere-constrained maximization of the
/// surrogate, first over w then over c. A block update is kept only when it
/// strictly increases the surrogate, so the result never decreases it; when
/// neither block improves, the input pair is returned with `stalled` set.
template <typename Scalar>
ProjectorStep<Scalar> projector_step(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w_k,
                                     const Vector<Scalar>& c_k, const HQState<Scalar>& st,
                                     const KernelBandwidths<Scalar>& bw) {
  const auto k = surrogate_coefficients(st, bw);
  if (!all_finite(k.a) || !all_finite(k.e) || !all_finite(k.f))
    throw OptimizationError("projector step: non-finite surrogate coefficients (bandwidth collapse)");

  ProjectorStep<Scalar> out{w_k, c_k, false, Scalar(0), Scalar(0)};
  const Scalar before = surrogate_value(x_s, y_s, w_k, c_k, k);
  if (!std::isfinite(before)) throw OptimizationError("projector step: non-finite surrogate value");
  out.surrogate_before = before;
  Scalar current = before;
  bool improved = false;

  {
    const Vector<Scalar> u = y_s * out.c;
    const Matrix<Scalar> quad = x_s.transpose() * (k.a.asDiagonal() * x_s);
    const Vector<Scalar> lin = x_s.transpose() * (k.f.array() * u.array()).matrix();
    const Vector<Scalar> w_new = maximize_on_sphere<Scalar>(quad, lin);
    const Scalar v = surrogate_value(x_s, y_s, w_new, out.c, k);
    if (std::isfinite(v) && v > current) {
      out.w = w_new;
      current = v;
      improved = true;
    }
  }
  {
    const Vector<Scalar> t = x_s * out.w;
    const Matrix<Scalar> quad = y_s.transpose() * (k.e.asDiagonal() * y_s);
    const Vector<Scalar> lin = y_s.transpose() * (k.f.array() * t.array()).matrix();
    const Vector<Scalar> c_new = maximize_on_sphere<Scalar>(quad, lin);
    const Scalar v = surrogate_value(x_s, y_s, out.w, c_new, k);
    if (std::isfinite(v) && v > current) {
      out.c = c_new;
      current = v;
      improved = true;
    }
  }
  out.surrogate_after = current;
  out.stalled = !improved;
  return out;
}

template <typename T>
struct FixedPointResult {
  T value;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // kernel objective at each accepted iterate
};

/// Kernel loading objective sum_l g_sigma(|x_l - t_l p|).
template <typename Scalar>
Scalar loading_objective(const Matrix<Scalar>& x_s, const Vector<Scalar>& t, const Vector<Scalar>& p, Scalar sigma) {
  const Vector<Scalar> e2 = (x_s - t * p.transpose()).rowwise().squaredNorm();
  return exact_exp(-e2.array() * detail::inv_two_sigma_sq(sigma)).sum();
}

template <typename Scalar>
Scalar scalar_objective(const Vector<Scalar>& u, const Vector<Scalar>& t, Scalar b, Scalar sigma) {
  return exact_exp(-(u - b * t).array().square() * detail::inv_two_sigma_sq(sigma)).sum();
}

namespace detail {

/// Shared fixed-point driver. `residual_sq(v)` returns the squared residual
/// per observation, `update(weights)` the weighted least-squares solution.
template <typename T, typename Scalar, typename ResidualFn, typename UpdateFn, typename DistFn>
FixedPointResult<T> fixed_point(T start, Scalar sigma, int max_iters, double tol, ResidualFn residual_sq,
                                UpdateFn update, DistFn relative_step) {
  using std::exp;
  FixedPointResult<T> res;
  res.value = std::move(start);
  const Scalar inv = inv_two_sigma_sq(sigma);
  Vector<Scalar> z = residual_sq(res.value) * inv;
  Scalar log_obj = log_sum_exp_neg(z);
  res.objective_trace.push_back(static_cast<double>(exact_exp(-z.array()).sum()));
  for (int it = 0; it < max_iters; ++it) {
    const Vector<Scalar> weights = exact_exp(-(z.array() - z.minCoeff())).matrix();
    std::optional<T> next = update(weights);
    if (!next) throw DegenerateError("fixed-point update: kernel weights vanish (bandwidth too small)");
    const Vector<Scalar> z_next = residual_sq(*next) * inv;
    const Scalar log_next = log_sum_exp_neg(z_next);
    const double obj_next = static_cast<double>(exact_exp(-z_next.array()).sum());
    // The recorded (linear) objective must not drop either, even by rounding.
    if (!(log_next >= log_obj) || obj_next < res.objective_trace.back()) {
      res.converged = true;
      break;
    }
    const double step = relative_step(*next, res.value);
    res.value = std::move(*next);
    z = z_next;
    log_obj = log_next;
    res.objective_trace.push_back(obj_next);
    res.iterations = it + 1;
    if (step < tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace detail

/// Kernel (MCC) loading by fixed-point iteration from the least-squares loading.
template <typename Scalar>
FixedPointResult<Vector<Scalar>> fixed_point_loading(const Matrix<Scalar>& x_s, const Vector<Scalar>& t,
                                                     Scalar sigma_p, const PmcrConfig& cfg) {
  if (!(sigma_p > 0)) throw DomainError("fixed_point_loading: bandwidth must be positive");
  const Scalar tt = t.squaredNorm();
  if (!(tt > 0)) throw DegenerateError("fixed_point_loading: score vector is zero");
  Vector<Scalar> start = x_s.transpose() * t / tt;
  return detail::fixed_point(
      std::move(start), sigma_p, cfg.max_fp_iters, cfg.fp_tol,
      [&](const Vector<Scalar>& p) -> Vector<Scalar> { return (x_s - t * p.transpose()).rowwise().squaredNorm(); },
      [&](const Vector<Scalar>& wts) -> std::optional<Vector<Scalar>> {
        const Scalar den = (wts.array() * t.array().square()).sum();
        if (!(den > 0) || !std::isfinite(den)) return std::nullopt;
        return Vector<Scalar>(x_s.transpose() * (wts.array() * t.array()).matrix() / den);
      },
      [](const Vector<Scalar>& a, const Vector<Scalar>& b) {
        return static_cast<double>((a - b).norm() / std::max(Scalar(1), b.norm()));
      });
}

/// Kernel (MCC) regression scalar by fixed-point iteration from the least-squares scalar.
template <typename Scalar>
FixedPointResult<Scalar> fixed_point_scalar(const Vector<Scalar>& u, const Vector<Scalar>& t, Scalar sigma_b,
                                            const PmcrConfig& cfg) {
  if (!(sigma_b > 0)) throw DomainError("fixed_point_scalar: bandwidth must be positive");
  if (u.size() != t.size()) throw DomainError("fixed_point_scalar: length mismatch");
  const Scalar tt = t.squaredNorm();
  if (!(tt > 0)) throw DegenerateError("fixed_point_scalar: score vector is zero");
  Scalar start = u.dot(t) / tt;
  if (cfg.multistart) {
    // Exact fits of single observations are the candidate modes.
    const Scalar inv = detail::inv_two_sigma_sq(sigma_b);
    Scalar best = detail::log_sum_exp_neg(Vector<Scalar>((u - start * t).array().square() * inv));
    const Scalar margin = Scalar(1e-12) * std::max(Scalar(1), std::abs(best));
    for (Index i = 0; i < t.size(); ++i) {
      if (t(i) == Scalar(0)) continue;
      const Scalar b = u(i) / t(i);
      const Scalar v = detail::log_sum_exp_neg(Vector<Scalar>((u - b * t).array().square() * inv));
      if (v > best + margin) {
        best = v;
        start = b;
      }
    }
  }
  return detail::fixed_point(
      start, sigma_b, cfg.max_fp_iters, cfg.fp_tol,
      [&](Scalar b) -> Vector<Scalar> { return (u - b * t).array().square().matrix(); },
      [&](const Vector<Scalar>& wts) -> std::optional<Scalar> {
        const Scalar den = (wts.array() * t.array().square()).sum();
        if (!(den > 0) || !std::isfinite(den)) return std::nullopt;
        return Scalar((wts.array() * t.array() * u.array()).sum() / den);
      },
      [](Scalar a, Scalar b) {
        using std::abs;
        return static_cast<double>(abs(a - b) / std::max(Scalar(1), abs(b)));
      });
}

template <typename Scalar>
struct BandwidthReport {
  KernelBandwidths<Scalar> bandwidths;
  std::array<bool, 5> floored{};  // x, y, r, p, b
  std::array<bool, 5> degenerate{};
};

/// Silverman bandwidths of the five error sets at the initial (least-squares) solution:
/// x / y reconstruction magnitudes, latent prediction errors t - u,
/// loading residual magnitudes |x_l - t_l p|, and scalar residuals u - t b.
/// A spread below 1e-12 of the set's data scale (median row norm or median
/// |score|, so a few exploding rows do not dominate) is rounding noise and is
/// treated as zero (floored, degenerate).
template <typename Scalar>
BandwidthReport<Scalar> compute_bandwidths(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, const Vector<Scalar>& w,
                                           const Vector<Scalar>& c, const Vector<Scalar>& p_init, Scalar b_init,
                                           bool classic = false) {
  const Vector<Scalar> t = x_s * w;
  const Vector<Scalar> u = y_s * c;
  const std::array<Vector<Scalar>, 5> sets{
      Vector<Scalar>((x_s - t * w.transpose()).rowwise().norm()),
      Vector<Scalar>((y_s - u * c.transpose()).rowwise().norm()),
      Vector<Scalar>(t - u),
      Vector<Scalar>((x_s - t * p_init.transpose()).rowwise().norm()),
      Vector<Scalar>(u - b_init * t),
  };
  const Scalar x_scale = detail::median(Vector<Scalar>(x_s.rowwise().norm()));
  const Scalar y_scale = detail::median(Vector<Scalar>(y_s.rowwise().norm()));
  const Scalar tu_scale = std::max(detail::median(Vector<Scalar>(t.cwiseAbs())), detail::median(Vector<Scalar>(u.cwiseAbs())));
  const std::array<Scalar, 5> scale{x_scale, y_scale, tu_scale, x_scale, tu_scale};
  BandwidthReport<Scalar> rep;
  std::array<Scalar, 5> sig{};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    auto est = silverman_bandwidth(sets[i], classic);
    if (est.spread <= Scalar(kResidualStopRatio) * scale[i]) {
      est.sigma = Scalar(kBandwidthFloor);
      est.floored = true;
      est.degenerate_spread = true;
    }
    sig[i] = est.sigma;
    rep.floored[i] = est.floored;
    rep.degenerate[i] = est.degenerate_spread;
  }
  rep.bandwidths = {sig[0], sig[1], sig[2], sig[3], sig[4]};
  return rep;
}

namespace detail {

template <typename Fn>
decltype(auto) with_context(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const OptimizationError& e) {
    throw OptimizationError(where + ": " + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(where + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(where + ": " + e.what());
  }
}

}  // namespace detail

namespace detail {

template <typename Scalar>
struct HqRun {
  Vector<Scalar> w, c;
  Scalar objective{};
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
  Index start = -1;
};

/// Half-quadratic ascent of the projector objective from (w, c).
template <typename Scalar>
HqRun<Scalar> hq_ascent(const Matrix<Scalar>& x_s, const Matrix<Scalar>& y_s, Vector<Scalar> w, Vector<Scalar> c,
                        const KernelBandwidths<Scalar>& bw, int max_iters, Scalar varsigma, const std::string& where) {
  HqRun<Scalar> run;
  run.objective = projector_objective(x_s, y_s, w, c, bw);
  run.trace.push_back(static_cast<double>(run.objective));
  for (int it = 0; it < max_iters; ++it) {
    const std::string at = where + ", HQ iteration " + std::to_string(it + 1);
    const auto step = with_context(at, [&] {
      const auto st = hq_update_auxiliaries(x_s, y_s, w, c, bw);
      return projector_step(x_s, y_s, w, c, st, bw);
    });
    run.iterations = it + 1;
    if (step.stalled) {
      run.stalled = true;
      run.converged = true;
      break;
    }
    w = step.w / step.w.norm();
    c = step.c / step.c.norm();
    const Scalar next = projector_objective(x_s, y_s, w, c, bw);
    run.trace.push_back(static_cast<double>(next));
    using std::abs;
    const bool done = abs(next - run.objective) < varsigma;
    run.objective = next;
    if (done) {
      run.converged = true;
      break;
    }
  }
  run.w = std::move(w);
  run.c = std::move(c);
  return run;
}

}  // namespace detail

/// Fits a PMCR model.
///
/// The fit runs in the coordinates of the row space of X (thin SVD, X = U S V'):
/// every residual X_s and every loading stays in that space, and the
/// objectives depend on w only through X_s w, so w is searched as V z with
/// unit z. Factors are mapped back with V before assembling H.
template <typename DX, typename DY>
FactorModel<typename DX::Scalar> pmcr_fit(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& y,
                                          const PmcrConfig& cfg, std::vector<FactorDiagnostics>* diagnostics = nullptr) {
  using Scalar = typename DX::Scalar;
  cfg.validate();
  detail::check_factor_count(cfg.factors, x.cols(), x.rows());

  FactorModel<Scalar> model;
  model.algorithm = Algorithm::pmcr;
  model.requested_factors = cfg.factors;
  Matrix<Scalar> x_full, y_s;
  detail::prepare_fit(x, y, FitOptions{cfg.center}, x_full, y_s, model);
  const Index n = x_full.cols();
  const Index m = y_s.cols();
  const Index l = x_full.rows();
  const Scalar varsigma = cfg.varsigma ? Scalar(*cfg.varsigma) : Scalar(1e-6) * Scalar(l);

  Matrix<Scalar> basis;  // N x r
  {
    Eigen::BDCSVD<Matrix<Scalar>> svd(x_full, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const Scalar tol = static_cast<Scalar>(std::max(l, n)) * std::numeric_limits<Scalar>::epsilon() *
                       (sv.size() ? sv(0) : Scalar(0));
    Index rank = 0;
    while (rank < sv.size() && sv(rank) > tol) ++rank;
    basis = svd.matrixV().leftCols(rank);
  }
  Matrix<Scalar> x_s = x_full * basis;
  const Scalar x0 = x_full.norm();
  const Scalar y0 = y_s.norm();
  if (basis.cols() == 0) model.stop_reason = "input matrix is zero";

  std::optional<KernelBandwidths<Scalar>> override_bw;
  if (cfg.bandwidth_override) {
    const auto& o = *cfg.bandwidth_override;
    override_bw = KernelBandwidths<Scalar>{Scalar(o.sigma_x), Scalar(o.sigma_y), Scalar(o.sigma_r),
                                           Scalar(o.sigma_p), Scalar(o.sigma_b)};
  }

  // Factors are appended only once complete and x_s, y_s are deflated last,
  // so an error leaves a consistent prefix model behind.
  try {
    for (Index k = 0; k < cfg.factors && basis.cols() > 0; ++k) {
      const std::string where = "factor " + std::to_string(k + 1);
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
      Vector<Scalar> w = pair->left;
      Vector<Scalar> c = pair->right;
      const Vector<Scalar> t0 = x_s * w;
      if (!(t0.squaredNorm() > 0)) {
        model.stop_reason = "zero score vector at factor " + std::to_string(k + 1);
        break;
      }

      FactorDiagnostics diag;
      diag.factor = k + 1;
      KernelBandwidths<Scalar> bw;
      if (override_bw) {
        bw = *override_bw;
      } else {
        const Vector<Scalar> p_init = ls_loading(x_s, t0);
        const Scalar b_init = ls_scalar(Vector<Scalar>(y_s * c), t0);
        const auto rep = detail::with_context(
            where, [&] { return compute_bandwidths(x_s, y_s, w, c, p_init, b_init, cfg.silverman_classic); });
        bw = rep.bandwidths;
        diag.bandwidth_floored = rep.floored;
      }
      diag.bandwidths = {double(bw.sigma_x), double(bw.sigma_y), double(bw.sigma_r), double(bw.sigma_p),
                         double(bw.sigma_b)};

      // Starting pairs: the least-squares pair, then single observations.
      std::vector<std::pair<Vector<Scalar>, Vector<Scalar>>> starts{{w, c}};
      std::vector<Index> origin{-1};
      if (cfg.max_hq_iters > 0 && cfg.projector_starts > 0) {
        std::vector<std::pair<Scalar, Index>> ranked;
        const Vector<Scalar> xn = x_s.rowwise().norm(), yn = y_s.rowwise().norm();
        for (Index i = 0; i < l; ++i) {
          if (!(xn(i) > 0) || !(yn(i) > 0)) continue;
          const Vector<Scalar> wi = x_s.row(i).transpose() / xn(i), ci = y_s.row(i).transpose() / yn(i);
          ranked.emplace_back(projector_objective(x_s, y_s, wi, ci, bw), i);
        }
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        if (static_cast<Index>(ranked.size()) > cfg.projector_starts)
          ranked.resize(static_cast<std::size_t>(cfg.projector_starts));
        for (const auto& [v, i] : ranked) {
          starts.emplace_back(x_s.row(i).transpose() / xn(i), y_s.row(i).transpose() / yn(i));
          origin.push_back(i);
        }
      }

      std::optional<detail::HqRun<Scalar>> best;
      for (std::size_t si = 0; si < starts.size(); ++si) {
        auto run =
            detail::hq_ascent(x_s, y_s, starts[si].first, starts[si].second, bw, cfg.max_hq_iters, varsigma, where);
        const Scalar margin = Scalar(1e-12) * std::max(Scalar(1), best ? std::abs(best->objective) : Scalar(0));
        if (!best || run.objective > best->objective + margin) {
          run.start = origin[si];
          best = std::move(run);
        }
      }
      w = best->w;
      c = best->c;
      diag.objective_trace = std::move(best->trace);
      diag.hq_iterations = best->iterations;
      diag.converged = best->converged;
      diag.stalled = best->stalled;
      diag.start_observation = best->start;

      LatentFactor<Scalar> f;
      f.w = w;
      f.c = c;
      f.t = x_s * w;
      f.u = y_s * c;
      if (!(f.t.squaredNorm() > 0)) {
        model.stop_reason = "zero score vector at factor " + std::to_string(k + 1);
        break;
      }
      const auto lp = detail::with_context(where, [&] { return fixed_point_loading(x_s, f.t, bw.sigma_p, cfg); });
      const auto lb = detail::with_context(where, [&] { return fixed_point_scalar(f.u, f.t, bw.sigma_b, cfg); });
      f.p = lp.value;
      f.b = lb.value;
      diag.loading_iterations = lp.iterations;
      diag.scalar_iterations = lb.iterations;
      deflate_in_place(x_s, y_s, f);

      f.w = basis * f.w;
      f.p = basis * f.p;
      detail::apply_sign_convention(f);
      model.factors.push_back(std::move(f));
      if (diagnostics) diagnostics->push_back(std::move(diag));
    }
  } catch (const Error& e) {
    if (!cfg.keep_partial || model.factors.empty()) throw;
    if (dynamic_cast<const DegenerateError*>(&e)) model.failure = "degenerate_error";
    else if (dynamic_cast<const OptimizationError*>(&e)) model.failure = "optimization_error";
    else if (dynamic_cast<const DomainError*>(&e)) model.failure = "domain_error";
    else throw;
    model.stop_reason = e.what();
  }
  model.h = assemble_coefficients(model.factors, n, m);
  return model;
}

}  // namespace robustpls
