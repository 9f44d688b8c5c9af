#pragma once

#include "robustpls/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace robustpls {

/// How the per-observation residual row is reduced for MAE.
enum class MaeNorm { euclidean, l1 };

/// Sample Pearson correlation. Throws DomainError when either sequence is constant.
template <typename DA, typename DB>
double pearson_r(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() != b.size())
    throw SpecificationError("pearson_r: lengths differ (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
  if (a.size() < 2) throw SpecificationError("pearson_r: need at least 2 observations");
  const auto ca = (a.derived().array().template cast<double>() - a.derived().template cast<double>().mean()).eval();
  const auto cb = (b.derived().array().template cast<double>() - b.derived().template cast<double>().mean()).eval();
  const double saa = ca.square().sum();
  const double sbb = cb.square().sum();
  if (!(saa > 0) || !(sbb > 0)) throw DomainError("pearson_r: correlation undefined for a constant sequence");
  const double r = (ca * cb).sum() / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

/// As pearson_r, but an undefined correlation is reported as nullopt.
template <typename DA, typename DB>
std::optional<double> try_pearson_r(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  try {
    return pearson_r(a, b);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

namespace detail {
template <typename DA, typename DB>
void check_same_shape(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw SpecificationError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
  if (a.rows() < 1) throw SpecificationError(std::string(what) + ": no observations");
}
}  // namespace detail

/// sqrt of the mean squared Euclidean row distance.
template <typename DA, typename DB>
double rmse(const Eigen::MatrixBase<DA>& y_hat, const Eigen::MatrixBase<DB>& y) {
  detail::check_same_shape(y_hat, y, "rmse");
  return std::sqrt((y_hat.template cast<double>() - y.template cast<double>()).rowwise().squaredNorm().mean());
}

/// Mean of the per-row residual norm (Euclidean by default, or sum of |.|).
template <typename DA, typename DB>
double mae(const Eigen::MatrixBase<DA>& y_hat, const Eigen::MatrixBase<DB>& y, MaeNorm norm = MaeNorm::euclidean) {
  detail::check_same_shape(y_hat, y, "mae");
  const Matrix<double> d = y_hat.template cast<double>() - y.template cast<double>();
  if (norm == MaeNorm::l1) return d.cwiseAbs().rowwise().sum().mean();
  return d.rowwise().norm().mean();
}

/// Per-axis metrics and their means over axes. A missing r (constant
/// column) is skipped by mean_r; mean_r is missing only when every axis is.
struct MetricsRecord {
  std::vector<std::optional<double>> r;
  std::vector<double> rmse;
  std::vector<double> mae;
  std::optional<double> mean_r;
  double mean_rmse = 0;
  double mean_mae = 0;
  double joint_rmse = 0;  // over whole rows
  double joint_mae = 0;

  std::size_t axes() const { return rmse.size(); }
};

template <typename DA, typename DB>
MetricsRecord evaluate(const Eigen::MatrixBase<DA>& y_hat, const Eigen::MatrixBase<DB>& y,
                       MaeNorm norm = MaeNorm::euclidean) {
  detail::check_same_shape(y_hat, y, "evaluate");
  MetricsRecord rec;
  double r_sum = 0;
  int r_count = 0;
  for (Index j = 0; j < y.cols(); ++j) {
    const auto r = y.rows() >= 2 ? try_pearson_r(y_hat.col(j), y.col(j)) : std::nullopt;
    rec.r.push_back(r);
    if (r) {
      r_sum += *r;
      ++r_count;
    }
    rec.rmse.push_back(rmse(y_hat.col(j), y.col(j)));
    rec.mae.push_back(mae(y_hat.col(j), y.col(j), norm));
  }
  if (r_count > 0) rec.mean_r = r_sum / r_count;
  for (std::size_t j = 0; j < rec.rmse.size(); ++j) {
    rec.mean_rmse += rec.rmse[j];
    rec.mean_mae += rec.mae[j];
  }
  rec.mean_rmse /= static_cast<double>(rec.rmse.size());
  rec.mean_mae /= static_cast<double>(rec.mae.size());
  rec.joint_rmse = rmse(y_hat, y);
  rec.joint_mae = mae(y_hat, y, norm);
  return rec;
}

/// Sizes of the three index domains of an input vector. The flat index of
/// (ch, freq, temp) is (ch * n_freq + freq) * n_temp + temp.
struct AxisSizes {
  Index channels = 1;
  Index frequencies = 1;
  Index lags = 1;

  Index total() const { return channels * frequencies * lags; }
};

struct ContributionWeights {
  AxisSizes sizes;
  std::vector<double> channel;
  std::vector<double> frequency;
  std::vector<double> lag;
};

/// Share of sum |h| carried by each channel, frequency and lag, computed per
/// output column of h and averaged over columns. Columns of h that are all
/// zero are skipped; an all-zero h is degenerate.
template <typename Derived>
ContributionWeights contribution_weights(const Eigen::MatrixBase<Derived>& h, const AxisSizes& sizes) {
  if (sizes.channels < 1 || sizes.frequencies < 1 || sizes.lags < 1 || sizes.total() != h.rows())
    throw SpecificationError("contribution_weights: " + std::to_string(h.rows()) + " inputs do not factor as " +
                             std::to_string(sizes.channels) + " x " + std::to_string(sizes.frequencies) + " x " +
                             std::to_string(sizes.lags));
  if (!all_finite(h)) throw DomainError("contribution_weights: non-finite coefficient");
  ContributionWeights out;
  out.sizes = sizes;
  out.channel.assign(static_cast<std::size_t>(sizes.channels), 0.0);
  out.frequency.assign(static_cast<std::size_t>(sizes.frequencies), 0.0);
  out.lag.assign(static_cast<std::size_t>(sizes.lags), 0.0);

  int used = 0;
  for (Index j = 0; j < h.cols(); ++j) {
    const Vector<double> a = h.col(j).template cast<double>().cwiseAbs();
    const double total = a.sum();
    if (!(total > 0)) continue;
    ++used;
    Index flat = 0;
    for (Index ch = 0; ch < sizes.channels; ++ch)
      for (Index f = 0; f < sizes.frequencies; ++f)
        for (Index t = 0; t < sizes.lags; ++t, ++flat) {
          const double v = a(flat) / total;
          out.channel[static_cast<std::size_t>(ch)] += v;
          out.frequency[static_cast<std::size_t>(f)] += v;
          out.lag[static_cast<std::size_t>(t)] += v;
        }
  }
  if (used == 0) throw DegenerateError("contribution_weights: coefficient matrix is zero");
  for (auto* v : {&out.channel, &out.frequency, &out.lag})
    for (auto& x : *v) x /= used;
  return out;
}

}  // namespace robustpls
