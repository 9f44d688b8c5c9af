#include "robustpls/dataset.hpp"
#include "robustpls/plsr.hpp"
#include "robustpls/pmcr.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace robustpls;

namespace {

struct Tiny {
  DataMatrix x, y;
};

// Small latent-variable instance with a few grossly corrupted rows.
Tiny contaminated_instance(std::uint64_t seed, Index l = 30, Index n = 8, Index m = 2, double level = 0.2) {
  SyntheticSpec spec{l, 1, 3, n, m, seed};
  const auto d = generate_synthetic(spec);
  return {contaminate(d.train.x, {level, 20.0, seed}).matrix, d.train.y};
}

double total_rmse(const DataMatrix& a, const DataMatrix& b) { return std::sqrt((a - b).rowwise().squaredNorm().mean()); }

}  // namespace

TEST_CASE("scalarized reconstruction error") {
  Rng rng(1);
  const DataVector w = testutil::unit_vector(rng, 5);
  CHECK(scalarized_recon_error(DataVector(3.0 * w), w) == doctest::Approx(0).epsilon(1e-7));

  DataVector e0(3), e1(3);
  e0 << 1, 0, 0;
  e1 << 0, 4, 3;
  CHECK(scalarized_recon_error(e1, e0) == doctest::Approx(5));

  for (int k = 0; k < 50; ++k) {
    const DataVector x = testutil::normal_vector(rng, 5, 3.0);
    const DataVector p = testutil::unit_vector(rng, 5);
    const double want = (x - x.dot(p) * p).norm();
    CHECK(std::abs(scalarized_recon_error(x, p) - want) <= 1e-10 * std::max(1.0, want));
  }
  CHECK_THROWS_AS(scalarized_recon_error(e1, DataVector(2 * e0)), DomainError);
}

TEST_CASE("projector objective") {
  Rng rng(2);
  const DataVector t = testutil::normal_vector(rng, 12);
  const DataVector w = testutil::unit_vector(rng, 4), c = testutil::unit_vector(rng, 2);
  const DataMatrix x = t * w.transpose(), y = t * c.transpose();
  const auto bw = KernelBandwidths<double>::uniform(0.7);
  CHECK(projector_objective(x, y, w, c, bw) == doctest::Approx(36.0).epsilon(1e-12));

  const DataMatrix xr = testutil::normal_matrix(rng, 12, 4), yr = testutil::normal_matrix(rng, 12, 2);
  const DataVector wr = testutil::unit_vector(rng, 4), cr = testutil::unit_vector(rng, 2);
  const double v = projector_objective(xr, yr, wr, cr, bw);
  CHECK(v > 0);
  CHECK(v <= 36.0);
  CHECK(projector_objective(xr, yr, DataVector(-wr), DataVector(-cr), bw) == v);
}

TEST_CASE("auxiliary variables") {
  Rng rng(3);
  const DataVector w = testutil::unit_vector(rng, 3), c = testutil::unit_vector(rng, 2);
  DataMatrix x = testutil::normal_matrix(rng, 6, 3), y = testutil::normal_matrix(rng, 6, 2);
  x.row(0) = 2.0 * w.transpose();  // zero x-reconstruction error
  x.row(1) = 1e3 * testutil::normal_vector(rng, 3).transpose();
  const auto bw = KernelBandwidths<double>::uniform(1.0);
  const auto st = hq_update_auxiliaries(x, y, w, c, bw);
  CHECK(st.alpha(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(st.alpha(1) >= -1e-10);
  for (const auto* v : {&st.alpha, &st.beta, &st.gamma}) {
    CHECK(v->maxCoeff() <= 0.0);
    CHECK(v->minCoeff() >= -1.0);
  }
}

TEST_CASE("surrogate is tangent to the objective at the expansion point") {
  Rng rng(4);
  for (int k = 0; k < 10; ++k) {
    const DataMatrix x = testutil::normal_matrix(rng, 15, 4), y = testutil::normal_matrix(rng, 15, 3);
    const DataVector w = testutil::unit_vector(rng, 4), c = testutil::unit_vector(rng, 3);
    KernelBandwidths<double> bw{1.5, 0.9, 1.2, 1.0, 1.0};
    const auto st = hq_update_auxiliaries(x, y, w, c, bw);
    const double h = 1e-6;
    for (Index i = 0; i < 7; ++i) {
      DataVector dw = DataVector::Zero(4), dc = DataVector::Zero(3);
      if (i < 4)
        dw(i) = h;
      else
        dc(i - 4) = h;
      const double g_obj = (projector_objective(x, y, DataVector(w + dw), DataVector(c + dc), bw) -
                            projector_objective(x, y, DataVector(w - dw), DataVector(c - dc), bw)) /
                           (2 * h);
      const double g_sur = (surrogate_objective(x, y, DataVector(w + dw), DataVector(c + dc), st, bw) -
                            surrogate_objective(x, y, DataVector(w - dw), DataVector(c - dc), st, bw)) /
                           (2 * h);
      CHECK(std::abs(g_obj - g_sur) <= 1e-5 * std::max(1.0, std::abs(g_obj)));
    }
  }
}

TEST_CASE("projector step") {
  SUBCASE("stationary point is kept") {
    Rng rng(5);
    const DataVector t = testutil::normal_vector(rng, 10);
    const DataVector w = testutil::unit_vector(rng, 3), c = testutil::unit_vector(rng, 2);
    const DataMatrix x = t * w.transpose(), y = t * c.transpose();
    const auto bw = KernelBandwidths<double>::uniform(1.0);
    const auto st = hq_update_auxiliaries(x, y, w, c, bw);
    const auto step = projector_step(x, y, w, c, st, bw);
    const double sign = step.w.dot(w) < 0 ? -1.0 : 1.0;
    CHECK((step.w - sign * w).norm() < 1e-8);
    CHECK((step.c - sign * c).norm() < 1e-8);
  }
  SUBCASE("one step from the least-squares start increases the objective") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto inst = contaminated_instance(seed);
      const auto pair = dominant_svd_pair(DataMatrix(inst.x.transpose() * inst.y));
      REQUIRE(pair);
      const auto bw = KernelBandwidths<double>::uniform(2.0);
      const double before = projector_objective(inst.x, inst.y, pair->left, pair->right, bw);
      const auto st = hq_update_auxiliaries(inst.x, inst.y, pair->left, pair->right, bw);
      const auto step = projector_step(inst.x, inst.y, pair->left, pair->right, st, bw);
      CHECK_FALSE(step.stalled);
      CHECK(step.surrogate_after > step.surrogate_before);
      CHECK(projector_objective(inst.x, inst.y, step.w, step.c, bw) > before);
      CHECK(step.w.norm() == doctest::Approx(1));
      CHECK(step.c.norm() == doctest::Approx(1));
    }
  }
  SUBCASE("no ascent returns the input pair with a stall flag") {
    Rng rng(6);
    const DataVector t = testutil::normal_vector(rng, 8);
    DataVector w(2), c(2);
    w << 1, 0;
    c << 1, 0;
    const DataMatrix x = t * w.transpose(), y = t * c.transpose();
    const auto bw = KernelBandwidths<double>::uniform(1.0);
    const auto st = hq_update_auxiliaries(x, y, w, c, bw);
    const auto step = projector_step(x, y, w, c, st, bw);
    CHECK(step.stalled);
    CHECK(step.w == w);
    CHECK(step.c == c);
    CHECK(step.surrogate_after == step.surrogate_before);
  }
  SUBCASE("collapsed bandwidth is an optimization error") {
    const auto inst = contaminated_instance(3);
    const auto pair = dominant_svd_pair(DataMatrix(inst.x.transpose() * inst.y));
    const auto bw = KernelBandwidths<double>::uniform(1e-300);
    const auto st = hq_update_auxiliaries(inst.x, inst.y, pair->left, pair->right, bw);
    CHECK_THROWS_AS(projector_step(inst.x, inst.y, pair->left, pair->right, st, bw), OptimizationError);
  }
}

TEST_CASE("fixed-point loading") {
  Rng rng(7);
  PmcrConfig cfg;
  const DataVector t = testutil::normal_vector(rng, 20);
  const DataVector p = testutil::normal_vector(rng, 4);
  const DataMatrix x = t * p.transpose();
  CHECK((fixed_point_loading(x, t, 0.5, cfg).value - p).norm() < 1e-10);

  const DataMatrix xn = x + testutil::normal_matrix(rng, 20, 4, 0.3);
  const DataVector ls = ls_loading(xn, t);
  CHECK((fixed_point_loading(xn, t, 1e8, cfg).value - ls).norm() <= 1e-6 * ls.norm());

  SUBCASE("one outlier row against a grid oracle") {
    const DataVector tt = testutil::normal_vector(rng, 12);
    DataVector p2(2);
    p2 << 1.5, -0.5;
    DataMatrix x2 = tt * p2.transpose() + testutil::normal_matrix(rng, 12, 2, 0.1);
    x2.row(3) << 40, 35;
    const double sigma = 0.5;
    const auto r = fixed_point_loading(x2, tt, sigma, cfg);
    double grid = -1;
    for (int i = -300; i <= 300; ++i)
      for (int j = -300; j <= 300; ++j) {
        DataVector q(2);
        q << i * 0.01, j * 0.01;
        grid = std::max(grid, loading_objective(x2, tt, q, sigma));
      }
    CHECK(loading_objective(x2, tt, r.value, sigma) >= grid - 1e-3);
    for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
      CHECK(r.objective_trace[k] >= r.objective_trace[k - 1]);
  }
  CHECK_THROWS_AS(fixed_point_loading(x, DataVector(DataVector::Zero(20)), 1.0, cfg), DegenerateError);
  CHECK_THROWS_AS(fixed_point_loading(x, t, 0.0, cfg), DomainError);
}

TEST_CASE("fixed-point scalar") {
  Rng rng(8);
  PmcrConfig cfg;
  const DataVector t = testutil::normal_vector(rng, 25);
  CHECK(fixed_point_scalar(DataVector(3 * t), t, 0.5, cfg).value == doctest::Approx(3).epsilon(1e-12));

  const DataVector u = 2 * t + testutil::normal_vector(rng, 25, 0.2);
  const double ls = ls_scalar(u, t);
  CHECK(std::abs(fixed_point_scalar(u, t, 1e8, cfg).value - ls) <= 1e-6 * std::abs(ls));

  DataVector uo = 2 * t;
  uo(4) += 500;
  const double b_ls = ls_scalar(uo, t);
  const double b = fixed_point_scalar(uo, t, 1.0, cfg).value;
  CHECK(std::abs(b - 2) < std::abs(b_ls - 2));

  for (bool multistart : {true, false}) {
    cfg.multistart = multistart;
    for (int k = 0; k < 20; ++k) {
      const DataVector tk = testutil::normal_vector(rng, 30);
      DataVector uk = -1.2 * tk + testutil::normal_vector(rng, 30, 0.3);
      for (int j = 0; j < 6; ++j) uk(static_cast<Index>(rng.below(30))) += 30 * rng.normal();
      const auto r = fixed_point_scalar(uk, tk, 0.3 + rng.uniform(), cfg);
      for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
        CHECK(r.objective_trace[i] >= r.objective_trace[i - 1]);
    }
  }

  // All weight on an observation with t = 0.
  cfg.multistart = false;
  DataVector t0(3), u0(3);
  t0 << 0, 1, 2;
  u0 << 0, 50, -70;
  CHECK_THROWS_AS(fixed_point_scalar(u0, t0, 1e-3, cfg), DegenerateError);
}

TEST_CASE("multistart escapes the least-squares basin") {
  // Half the observations have large scores and no relation to u.
  Rng rng(9);
  const Index l = 100;
  DataVector t(l), u(l);
  for (Index i = 0; i < l; ++i) {
    if (i % 2 == 0) {
      t(i) = rng.normal();
      u(i) = t(i) + 0.01 * rng.normal();
    } else {
      t(i) = 30 * rng.normal();
      u(i) = rng.normal();
    }
  }
  PmcrConfig cfg;
  const double sigma = 0.3;
  const auto with = fixed_point_scalar(u, t, sigma, cfg);
  cfg.multistart = false;
  const auto without = fixed_point_scalar(u, t, sigma, cfg);
  CHECK(std::abs(with.value - 1) < 0.05);
  CHECK(scalar_objective(u, t, with.value, sigma) >= scalar_objective(u, t, without.value, sigma));
}

TEST_CASE("bandwidths") {
  Rng rng(10);
  const DataVector t = testutil::normal_vector(rng, 10);
  const DataVector w = testutil::unit_vector(rng, 3), c = testutil::unit_vector(rng, 2);
  const DataMatrix x = t * w.transpose(), y = t * c.transpose();
  const auto rep = compute_bandwidths(x, y, w, c, w, 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(rep.floored[i]);
    CHECK(rep.degenerate[i]);
  }
  CHECK(rep.bandwidths.sigma_x == kBandwidthFloor);

  const auto d = generate_synthetic(SyntheticSpec{60, 1, 4, 20, 2, 3});
  auto sigma_x_for = [&](double sd) {
    const DataMatrix xc = contaminate(d.train.x, {0.3, sd, 5}).matrix;
    const auto pair = dominant_svd_pair(DataMatrix(xc.transpose() * d.train.y));
    const DataVector t0 = xc * pair->left;
    const DataVector p0 = ls_loading(xc, t0);
    const double b0 = ls_scalar(DataVector(d.train.y * pair->right), t0);
    return compute_bandwidths(xc, d.train.y, pair->left, pair->right, p0, b0);
  };
  const auto lo = sigma_x_for(30), hi = sigma_x_for(300);
  CHECK(hi.bandwidths.sigma_x > lo.bandwidths.sigma_x);
  const auto again = sigma_x_for(30);
  CHECK(again.bandwidths.sigma_x == lo.bandwidths.sigma_x);
  CHECK(again.bandwidths.sigma_b == lo.bandwidths.sigma_b);
}

TEST_CASE("pmcr fit basics") {
  const auto inst = contaminated_instance(11, 40, 10, 2, 0.25);
  PmcrConfig cfg;
  cfg.factors = 3;
  std::vector<FactorDiagnostics> diag;
  const auto model = pmcr_fit(inst.x, inst.y, cfg, &diag);
  CHECK(model.algorithm == Algorithm::pmcr);
  REQUIRE(model.num_factors() == 3);
  REQUIRE(diag.size() == 3);
  for (const auto& f : model.factors) {
    CHECK(f.w.norm() == doctest::Approx(1).epsilon(1e-10));
    CHECK(f.c.norm() == doctest::Approx(1).epsilon(1e-10));
    CHECK(f.w(largest_magnitude_index(f.w)) > 0);
  }
  for (const auto& dg : diag) {
    CHECK(dg.bandwidths.valid());
    for (std::size_t k = 1; k < dg.objective_trace.size(); ++k)
      CHECK(dg.objective_trace[k] >= dg.objective_trace[k - 1] - 1e-10);
  }
  CHECK((model.h - assemble_coefficients(model.factors, 10, 2)).norm() < 1e-10);
  const auto again = pmcr_fit(inst.x, inst.y, cfg);
  CHECK(again.h == model.h);

  cfg.factors = 0;
  CHECK_THROWS_AS(pmcr_fit(inst.x, inst.y, cfg), SpecificationError);
  cfg.factors = 11;
  CHECK_THROWS_AS(pmcr_fit(inst.x, inst.y, cfg), SpecificationError);
}

TEST_CASE("zero HQ iterations keep the least-squares projectors") {
  const auto inst = contaminated_instance(12);
  PmcrConfig cfg;
  cfg.factors = 1;
  cfg.max_hq_iters = 0;
  const auto pm = pmcr_fit(inst.x, inst.y, cfg);
  const auto pl = plsr_fit(inst.x, inst.y, 1);
  CHECK((pm.factors[0].w - pl.factors[0].w).norm() < 1e-10);
  CHECK((pm.factors[0].c - pl.factors[0].c).norm() < 1e-10);
}

TEST_CASE("large bandwidths reproduce PLSR") {
  const auto inst = contaminated_instance(13);
  PmcrConfig cfg;
  cfg.factors = 2;
  cfg.bandwidth_override = KernelBandwidths<double>::uniform(1e8);
  const auto pm = pmcr_fit(inst.x, inst.y, cfg);
  const auto pl = plsr_fit(inst.x, inst.y, 2);
  const auto& a = pm.factors[0];
  const auto& b = pl.factors[0];
  CHECK((a.w - b.w).norm() < 1e-4);
  CHECK((a.c - b.c).norm() < 1e-4);
  CHECK((a.p - b.p).norm() < 1e-4 * std::max(1.0, b.p.norm()));
  CHECK(std::abs(a.b - b.b) < 1e-4 * std::max(1.0, std::abs(b.b)));
}

TEST_CASE("errors carry the factor and iteration") {
  const auto inst = contaminated_instance(14);
  PmcrConfig cfg;
  cfg.factors = 2;
  cfg.bandwidth_override = KernelBandwidths<double>::uniform(1e-300);
  try {
    pmcr_fit(inst.x, inst.y, cfg);
    FAIL("expected an optimization error");
  } catch (const OptimizationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("factor 1") != std::string::npos);
    CHECK(msg.find("HQ iteration 1") != std::string::npos);
  }
}

TEST_CASE("zero outputs stop before the first factor") {
  Rng rng(15);
  const DataMatrix x = testutil::normal_matrix(rng, 12, 4);
  PmcrConfig cfg;
  cfg.factors = 2;
  const auto m = pmcr_fit(x, DataMatrix::Zero(12, 2), cfg);
  CHECK(m.num_factors() == 0);
  CHECK(m.h == DataMatrix::Zero(4, 2));
}

TEST_CASE("contaminated synthetic data favour PMCR") {
  const auto d = generate_synthetic(SyntheticSpec{});
  const DataMatrix xc = contaminate(d.train.x, {0.5, 100.0, 1}).matrix;
  PmcrConfig cfg;
  cfg.factors = 5;
  const auto pm = pmcr_fit(xc, d.train.y, cfg);
  const auto pl = plsr_fit(xc, d.train.y, 5);
  CHECK(total_rmse(predict(pm, d.test.x), d.test.y) < total_rmse(predict(pl, d.test.x), d.test.y));
}

TEST_CASE("keep_partial returns the factors fitted before a failure") {
  // A tiny loading bandwidth fits one row exactly and zeroes it; the second
  // factor's loading weights then vanish.
  Rng rng(1);
  const DataMatrix x = testutil::normal_matrix(rng, 8, 3), y = testutil::normal_matrix(rng, 8, 2);
  PmcrConfig cfg;
  cfg.factors = 3;
  cfg.bandwidth_override = KernelBandwidths<double>::uniform(1e-3);
  CHECK_THROWS_AS(pmcr_fit(x, y, cfg), DegenerateError);

  cfg.keep_partial = true;
  const auto partial = pmcr_fit(x, y, cfg);
  CHECK(partial.num_factors() == 1);
  CHECK(partial.failure == "degenerate_error");
  CHECK(partial.stop_reason.find("factor 2") != std::string::npos);
  cfg.factors = 1;
  cfg.keep_partial = false;
  const auto one = pmcr_fit(x, y, cfg);
  CHECK((partial.h - one.h).norm() == 0.0);

  // A failure in the first factor still throws: a zero row has zero residual
  // for every p but t = 0, and holds all the weight.
  DataMatrix xz = x;
  xz.row(0).setZero();
  cfg.keep_partial = true;
  cfg.factors = 3;
  CHECK_THROWS_AS(pmcr_fit(xz, y, cfg), DegenerateError);
}

TEST_CASE("config validation") {
  PmcrConfig cfg;
  cfg.varsigma = -1;
  CHECK_THROWS_AS(cfg.validate(), SpecificationError);
  cfg = PmcrConfig{};
  cfg.max_fp_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), SpecificationError);
  cfg = PmcrConfig{};
  cfg.max_hq_iters = 0;
  CHECK_NOTHROW(cfg.validate());
  cfg.bandwidth_override = KernelBandwidths<double>::uniform(-1);
  CHECK_THROWS_AS(cfg.validate(), SpecificationError);
}
