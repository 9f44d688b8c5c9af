#include "robustpls/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace robustpls {

namespace {

std::string error_tag(const std::exception& e) {
  if (dynamic_cast<const OptimizationError*>(&e)) return "optimization_error";
  if (dynamic_cast<const DegenerateError*>(&e)) return "degenerate_error";
  if (dynamic_cast<const DomainError*>(&e)) return "domain_error";
  if (dynamic_cast<const SpecificationError*>(&e)) return "specification_error";
  return "error";
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string describe(Algorithm a, double level, double sd, Index trial) {
  return std::string(to_string(a)) + " level=" + fmt_g(level) + " std=" + fmt_g(sd) +
         " trial=" + std::to_string(trial);
}

void validate_settings(const TrialSettings& s) {
  s.synthetic.validate();
  if (s.algorithms.empty()) throw SpecificationError("benchmark: no algorithms selected");
  if (s.jobs < 1) throw SpecificationError("benchmark: jobs must be >= 1");
  PmcrConfig probe = s.pmcr;
  probe.factors = 1;
  probe.validate();
}

SyntheticPair trial_data(const TrialSettings& s, std::uint64_t seed) {
  SyntheticSpec spec = s.synthetic;
  spec.seed = seed;
  if (s.reuse_transforms)
    return generate_synthetic(spec, draw_transforms(spec, derive_seed(s.master_seed, "shared-transforms")));
  return generate_synthetic(spec);
}

FactorModel<double> fit_algorithm(Algorithm a, const DataMatrix& x, const DataMatrix& y, Index s,
                                  const TrialSettings& settings) {
  if (a == Algorithm::plsr) return plsr_fit(x, y, s, FitOptions{settings.center});
  PmcrConfig cfg = settings.pmcr;
  cfg.factors = s;
  cfg.center = settings.center;
  return pmcr_fit(x, y, cfg);
}

void append_metric_rows(std::vector<BenchmarkRow>& out, const BenchmarkRow& base, const MetricsRecord& m) {
  for (std::size_t j = 0; j < m.axes(); ++j) {
    BenchmarkRow row = base;
    row.axis = static_cast<Index>(j);
    row.r = m.r[j];
    row.rmse = m.rmse[j];
    row.mae = m.mae[j];
    const bool finite = std::isfinite(m.rmse[j]) && std::isfinite(m.mae[j]);
    row.status = finite ? "ok" : "non_finite";
    if (!finite) row.rmse = row.mae = row.r = std::nullopt;
    out.push_back(std::move(row));
  }
}

void append_error_rows(std::vector<BenchmarkRow>& out, const BenchmarkRow& base, Index axes, const std::string& tag) {
  for (Index j = 0; j < axes; ++j) {
    BenchmarkRow row = base;
    row.axis = j;
    row.status = tag;
    out.push_back(std::move(row));
  }
}

struct UnitOutput {
  std::vector<BenchmarkRow> rows;
  std::vector<std::string> errors;
};

/// Runs `units` independent jobs on up to `jobs` threads; outputs keep unit order.
std::vector<UnitOutput> run_units(std::size_t units, unsigned jobs, const std::function<UnitOutput(std::size_t)>& fn) {
  std::vector<UnitOutput> out(units);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= units) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(units, 1))));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

BenchmarkResult collect(std::vector<UnitOutput>&& units) {
  BenchmarkResult res;
  for (auto& u : units) {
    for (auto& r : u.rows) res.rows.push_back(std::move(r));
    for (auto& e : u.errors) res.errors.push_back(std::move(e));
  }
  return res;
}

}  // namespace

bool BenchmarkResult::any_ok() const {
  return std::any_of(rows.begin(), rows.end(), [](const BenchmarkRow& r) { return r.status == "ok"; });
}

std::uint64_t trial_seed(std::uint64_t master, Index trial) {
  return derive_seed(master, "trial", static_cast<std::uint64_t>(trial));
}

void BenchmarkConfig::validate() const {
  validate_settings(settings);
  if (levels.empty()) throw SpecificationError("benchmark: no noise levels");
  for (double l : levels)
    if (!(l >= 0.0 && l <= 1.0)) throw SpecificationError("benchmark: noise level " + fmt_g(l) + " outside [0, 1]");
  if (stds.empty()) throw SpecificationError("benchmark: no noise stds");
  for (double s : stds)
    if (!(s > 0.0) || !std::isfinite(s)) throw SpecificationError("benchmark: noise std must be positive");
  if (trials < 1) throw SpecificationError("benchmark: trials must be >= 1");
  if (factors && *factors < 1) throw SpecificationError("benchmark: factor count must be >= 1");
  if (s_max < 1 || folds < 2) throw SpecificationError("benchmark: need s_max >= 1 and folds >= 2");
}

BenchmarkConfig BenchmarkConfig::quick() {
  BenchmarkConfig cfg;
  cfg.levels = {0.0, 0.2, 0.5, 0.8};
  cfg.stds = {100.0};
  cfg.trials = 20;
  return cfg;
}

void SweepConfig::validate() const {
  validate_settings(settings);
  if (!(level >= 0.0 && level <= 1.0)) throw SpecificationError("sweep: noise level outside [0, 1]");
  if (!(noise_std > 0.0) || !std::isfinite(noise_std)) throw SpecificationError("sweep: noise std must be positive");
  if (trials < 1) throw SpecificationError("sweep: trials must be >= 1");
  if (factor_counts.empty()) throw SpecificationError("sweep: empty factor range");
  for (std::size_t i = 0; i < factor_counts.size(); ++i) {
    if (factor_counts[i] < 1) throw SpecificationError("sweep: factor counts must be >= 1");
    if (i && factor_counts[i] <= factor_counts[i - 1])
      throw SpecificationError("sweep: factor counts must be strictly ascending");
  }
  const Index bound = std::min(settings.synthetic.x_dim, settings.synthetic.train_count);
  if (factor_counts.back() > bound)
    throw SpecificationError("sweep: factor count " + std::to_string(factor_counts.back()) + " exceeds min(N, L) = " +
                             std::to_string(bound));
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  const std::size_t n_levels = cfg.levels.size();
  const std::size_t n_stds = cfg.stds.size();
  const auto trials = static_cast<std::size_t>(cfg.trials);
  const Index axes = cfg.settings.synthetic.y_dim;

  // Unit order is the canonical output order: level, std, trial.
  auto units = run_units(n_levels * n_stds * trials, cfg.settings.jobs, [&](std::size_t u) {
    const double level = cfg.levels[u / (n_stds * trials)];
    const double sd = cfg.stds[(u / trials) % n_stds];
    const auto trial = static_cast<Index>(u % trials);
    const std::uint64_t seed = trial_seed(cfg.settings.master_seed, trial);

    UnitOutput out;
    BenchmarkRow base;
    base.noise_level = level;
    base.noise_std = sd;
    base.trial = trial;
    base.seed = seed;

    const SyntheticPair data = trial_data(cfg.settings, seed);
    const DataMatrix x = contaminate(data.train.x, {level, sd, seed}).matrix;

    Index s = 0;
    std::string cv_error;
    try {
      s = cfg.factors ? *cfg.factors
                      : select_num_factors(x, data.train.y, cfg.s_max, cfg.folds, seed, FitOptions{cfg.settings.center})
                            .best;
    } catch (const std::exception& e) {
      cv_error = e.what();
      base.status = "cv_" + error_tag(e);
    }

    for (Algorithm a : cfg.settings.algorithms) {
      base.algorithm = a;
      base.s_used = s;
      if (!cv_error.empty()) {
        append_error_rows(out.rows, base, axes, base.status);
        out.errors.push_back(describe(a, level, sd, trial) + ": " + cv_error);
        continue;
      }
      try {
        const auto model = fit_algorithm(a, x, data.train.y, s, cfg.settings);
        base.s_used = model.num_factors();
        append_metric_rows(out.rows, base, evaluate(predict(model, data.test.x), data.test.y, cfg.settings.mae_norm));
      } catch (const std::exception& e) {
        append_error_rows(out.rows, base, axes, error_tag(e));
        out.errors.push_back(describe(a, level, sd, trial) + ": " + e.what());
      }
    }
    return out;
  });
  return collect(std::move(units));
}

BenchmarkResult factor_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const Index axes = cfg.settings.synthetic.y_dim;
  const Index s_top = cfg.factor_counts.back();

  auto units = run_units(static_cast<std::size_t>(cfg.trials), cfg.settings.jobs, [&](std::size_t u) {
    const auto trial = static_cast<Index>(u);
    const std::uint64_t seed = trial_seed(cfg.settings.master_seed, trial);
    UnitOutput out;
    BenchmarkRow base;
    base.noise_level = cfg.level;
    base.noise_std = cfg.noise_std;
    base.trial = trial;
    base.seed = seed;

    const SyntheticPair data = trial_data(cfg.settings, seed);
    const DataMatrix x = contaminate(data.train.x, {cfg.level, cfg.noise_std, seed}).matrix;

    for (Algorithm a : cfg.settings.algorithms) {
      base.algorithm = a;
      try {
        // Factors are extracted sequentially, so the first s factors of one
        // fit are the s-factor model.
        TrialSettings settings = cfg.settings;
        settings.pmcr.keep_partial = true;
        const auto model = fit_algorithm(a, x, data.train.y, s_top, settings);
        if (!model.failure.empty())
          out.errors.push_back(describe(a, cfg.level, cfg.noise_std, trial) + ": " + model.stop_reason);
        const std::string short_status = model.failure.empty() ? "stopped_early" : model.failure;
        std::vector<DataMatrix> preds = prefix_predictions(model, data.test.x);
        if (preds.empty()) preds.push_back(predict(model, data.test.x));
        for (Index s : cfg.factor_counts) {
          const auto have = static_cast<Index>(preds.size());
          base.s_used = std::min(s, have);
          const auto m = evaluate(preds[static_cast<std::size_t>(base.s_used - 1)], data.test.y, cfg.settings.mae_norm);
          const std::size_t first = out.rows.size();
          append_metric_rows(out.rows, base, m);
          if (s > have)
            for (std::size_t i = first; i < out.rows.size(); ++i)
              if (out.rows[i].status == "ok") out.rows[i].status = short_status;
        }
      } catch (const std::exception& e) {
        for (Index s : cfg.factor_counts) {
          base.s_used = s;
          append_error_rows(out.rows, base, axes, error_tag(e));
        }
        out.errors.push_back(describe(a, cfg.level, cfg.noise_std, trial) + ": " + e.what());
      }
    }
    return out;
  });
  return collect(std::move(units));
}

void write_benchmark_csv(const BenchmarkResult& result, std::ostream& out) {
  out << kBenchmarkHeader << '\n';
  const auto opt = [](const std::optional<double>& v) { return v ? fmt_g(*v) : std::string(); };
  for (const auto& r : result.rows) {
    out << to_string(r.algorithm) << ',' << fmt_g(r.noise_level) << ',' << fmt_g(r.noise_std) << ',' << r.trial << ','
        << r.axis << ',' << opt(r.r) << ',' << opt(r.rmse) << ',' << opt(r.mae) << ',' << r.s_used << ',' << r.seed
        << ',' << r.status << '\n';
  }
}

std::string benchmark_csv(const BenchmarkResult& result) {
  std::ostringstream os;
  write_benchmark_csv(result, os);
  return os.str();
}

std::vector<double> parse_grid(const std::string& text) {
  const auto to_double = [&](const std::string& tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tok.size()) throw SpecificationError("grid: bad number '" + tok + "' in '" + text + "'");
    return v;
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 2 && parts.size() != 3)
      throw SpecificationError("grid: expected start:stop or start:stop:step, got '" + text + "'");
    const double start = to_double(parts[0]), stop = to_double(parts[1]);
    const double step = parts.size() == 3 ? to_double(parts[2]) : 1.0;
    if (!(step > 0) || stop < start) throw SpecificationError("grid: need step > 0 and stop >= start in '" + text + "'");
    // Points are start + k * step; the stop is included up to rounding.
    const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long k = 0; k < count; ++k) {
      const double v = start + static_cast<double>(k) * step;
      out.push_back(std::round(v * 1e12) / 1e12);
    }
    return out;
  }
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (tok.empty()) throw SpecificationError("grid: empty entry in '" + text + "'");
    out.push_back(to_double(tok));
  }
  if (out.empty()) throw SpecificationError("grid: empty list");
  return out;
}

}  // namespace robustpls
