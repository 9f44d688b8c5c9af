#include "robustpls/metrics.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace robustpls;

namespace {

double naive_r(const DataVector& a, const DataVector& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    ma += a(i);
    mb += b(i);
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (Index i = 0; i < a.size(); ++i) {
    sab += (a(i) - ma) * (b(i) - mb);
    saa += (a(i) - ma) * (a(i) - ma);
    sbb += (b(i) - mb) * (b(i) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double naive_rmse(const DataMatrix& a, const DataMatrix& b) {
  double s = 0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s / static_cast<double>(a.rows()));
}

double naive_mae(const DataMatrix& a, const DataMatrix& b) {
  double s = 0;
  for (Index i = 0; i < a.rows(); ++i) {
    double row = 0;
    for (Index j = 0; j < a.cols(); ++j) row += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    s += std::sqrt(row);
  }
  return s / static_cast<double>(a.rows());
}

}  // namespace

TEST_CASE("metrics match naive references") {
  Rng rng(9);
  for (int k = 0; k < 100; ++k) {
    const Index l = 2 + static_cast<Index>(rng.below(50));
    const Index m = 1 + static_cast<Index>(rng.below(4));
    const DataMatrix a = testutil::normal_matrix(rng, l, m, 5.0), b = testutil::normal_matrix(rng, l, m, 5.0);
    CHECK(std::abs(rmse(a, b) - naive_rmse(a, b)) <= 1e-12 * std::max(1.0, naive_rmse(a, b)));
    CHECK(std::abs(mae(a, b) - naive_mae(a, b)) <= 1e-12 * std::max(1.0, naive_mae(a, b)));
    const DataVector x = a.col(0), y = b.col(0);
    CHECK(std::abs(pearson_r(x, y) - naive_r(x, y)) <= 1e-12);
  }
}

TEST_CASE("3-4-5 triangle") {
  DataMatrix y_hat(1, 2), y(1, 2);
  y_hat << 3, 4;
  y << 0, 0;
  CHECK(rmse(y_hat, y) == doctest::Approx(5));
  CHECK(mae(y_hat, y) == doctest::Approx(5));
  CHECK(mae(y_hat, y, MaeNorm::l1) == doctest::Approx(7));
}

TEST_CASE("pearson correlation") {
  DataVector a(4), b(4);
  a << 1, 2, 3, 4;
  b << 2, 4, 6, 8;
  CHECK(pearson_r(a, b) == doctest::Approx(1));
  CHECK(pearson_r(a, DataVector(-b)) == doctest::Approx(-1));
  const DataVector flat = DataVector::Constant(4, 2.0);
  CHECK_THROWS_AS(pearson_r(a, flat), DomainError);
  CHECK_FALSE(try_pearson_r(a, flat));
}

TEST_CASE("evaluation record") {
  DataMatrix y(4, 2), y_hat(4, 2);
  y << 1, 5, 2, 5, 3, 5, 4, 5;
  y_hat << 1.1, 4, 2.1, 6, 2.9, 5, 4.2, 5;
  const auto rec = evaluate(y_hat, y);
  REQUIRE(rec.r.size() == 2);
  CHECK(rec.r[0]);
  CHECK_FALSE(rec.r[1]);  // constant truth column
  CHECK(*rec.mean_r == doctest::Approx(*rec.r[0]));
  CHECK(rec.joint_rmse == doctest::Approx(naive_rmse(y_hat, y)));
  CHECK_THROWS_AS(evaluate(y_hat, DataMatrix(3, 2)), SpecificationError);
  const auto self = evaluate(y, y);
  CHECK(self.joint_rmse == 0);
  CHECK(self.joint_mae == 0);
}

TEST_CASE("contribution weights") {
  Rng rng(4);
  const AxisSizes sizes{3, 4, 2};
  const DataMatrix h = testutil::normal_matrix(rng, 24, 3);
  const auto cw = contribution_weights(h, sizes);
  for (const auto* v : {&cw.channel, &cw.frequency, &cw.lag}) {
    double s = 0;
    for (double x : *v) {
      CHECK(x >= 0);
      s += x;
    }
    CHECK(std::abs(s - 1) <= 1e-12);
  }
  const auto scaled = contribution_weights(DataMatrix(3 * h), sizes);
  for (std::size_t i = 0; i < cw.channel.size(); ++i)
    CHECK(std::abs(scaled.channel[i] - cw.channel[i]) <= 1e-12);

  // Channel-major layout: only channel 1 nonzero.
  DataMatrix one = DataMatrix::Zero(24, 1);
  one.block(8, 0, 8, 1).setOnes();
  const auto c1 = contribution_weights(one, sizes);
  CHECK(c1.channel[1] == doctest::Approx(1));
  CHECK(c1.frequency[0] == doctest::Approx(0.25));
  CHECK(c1.lag[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(contribution_weights(DataMatrix::Zero(24, 2), sizes), DegenerateError);
  CHECK_THROWS_AS(contribution_weights(h, AxisSizes{5, 5, 1}), SpecificationError);
}
