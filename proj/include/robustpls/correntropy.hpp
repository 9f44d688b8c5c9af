#pragma once

#include "robustpls/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace robustpls {

/// Lower bound on every kernel bandwidth.
inline constexpr double kBandwidthFloor = 1e-8;

/// Bandwidths of the five Gaussian kernels used per factor:
/// input reconstruction, output reconstruction, latent prediction, loading, scalar.
template <typename Scalar>
struct KernelBandwidths {
  Scalar sigma_x{1};
  Scalar sigma_y{1};
  Scalar sigma_r{1};
  Scalar sigma_p{1};
  Scalar sigma_b{1};

  bool valid() const {
    return sigma_x > 0 && sigma_y > 0 && sigma_r > 0 && sigma_p > 0 && sigma_b > 0 &&
           std::isfinite(sigma_x) && std::isfinite(sigma_y) && std::isfinite(sigma_r) &&
           std::isfinite(sigma_p) && std::isfinite(sigma_b);
  }

  static KernelBandwidths uniform(Scalar s) { return {s, s, s, s, s}; }
};

template <typename Scalar>
Scalar gaussian_kernel(Scalar magnitude, Scalar sigma) {
  if (!(sigma > 0)) throw DomainError("gaussian_kernel: bandwidth must be positive");
  using std::exp;
  return exp(-(magnitude * magnitude) / (Scalar(2) * sigma * sigma));
}

/// Empirical correntropy (1/L) sum_l g_sigma(a_l - b_l).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar correntropy_estimate(const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b,
                                               typename DerivedA::Scalar sigma) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size())
    throw DomainError("correntropy_estimate: sequences differ in length (" +
                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 1) throw DomainError("correntropy_estimate: empty sequences");
  if (!(sigma > 0)) throw DomainError("correntropy_estimate: bandwidth must be positive");
  const Scalar scale = Scalar(-1) / (Scalar(2) * sigma * sigma);
  const auto diff = (a.derived().array() - b.derived().array()).eval();
  return exact_exp(diff.square() * scale).mean();
}

/// Quantile of sorted data by linear interpolation between closest ranks
/// (position q * (n - 1), the inclusive method).
template <typename Scalar>
Scalar sorted_quantile(const std::vector<Scalar>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const Scalar frac = static_cast<Scalar>(pos - static_cast<double>(lo));
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

template <typename Scalar>
struct BandwidthEstimate {
  Scalar sigma{};
  bool degenerate_spread = false;  // floor applied because the spread vanished
  bool floored = false;            // floor applied for any reason
  Scalar spread{};                 // min(std, IQR / 1.34)
};

/// Silverman's rule on an error set.
///
/// v = 1.06 * min(std, IQR / 1.34) * L^(-1/5) with the sample standard
/// deviation (L - 1 denominator) and the inclusive-quartile IQR. By default
/// v is read as the squared bandwidth (sigma = sqrt(v)); `classic` uses
/// sigma = v. The result is floored at kBandwidthFloor.
template <typename Derived>
BandwidthEstimate<typename Derived::Scalar> silverman_bandwidth(const Eigen::MatrixBase<Derived>& errors,
                                                                bool classic = false) {
  using Scalar = typename Derived::Scalar;
  using std::sqrt;
  const Index n = errors.size();
  if (n < 2) throw DomainError("silverman_bandwidth: need at least 2 errors");
  if (!all_finite(errors)) throw DomainError("silverman_bandwidth: non-finite error value");

  const Vector<Scalar> e = errors;
  const Scalar mean = e.mean();
  const Scalar var = (e.array() - mean).square().sum() / Scalar(n - 1);
  const Scalar sd = sqrt(var);

  std::vector<Scalar> sorted(e.data(), e.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const Scalar iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);

  BandwidthEstimate<Scalar> est;
  est.spread = std::min(sd, iqr / Scalar(1.34));
  using std::pow;
  const Scalar v = Scalar(1.06) * est.spread * pow(Scalar(n), Scalar(-0.2));
  const Scalar sigma = classic ? v : sqrt(std::max(v, Scalar(0)));
  if (!(v > 0)) {
    est.degenerate_spread = true;
    est.floored = true;
    est.sigma = Scalar(kBandwidthFloor);
  } else if (sigma < Scalar(kBandwidthFloor)) {
    est.floored = true;
    est.sigma = Scalar(kBandwidthFloor);
  } else {
    est.sigma = sigma;
  }
  return est;
}

}  // namespace robustpls
