#pragma once

#include "robustpls/dataset.hpp"
#include "robustpls/metrics.hpp"
#include "robustpls/plsr.hpp"
#include "robustpls/pmcr.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace robustpls {

/// One tidy output row. Missing metrics (failed fit, undefined r) are nullopt.
struct BenchmarkRow {
  Algorithm algorithm = Algorithm::plsr;
  double noise_level = 0;
  double noise_std = 0;
  Index trial = 0;  // 0-based
  Index axis = 0;   // 0-based output column
  std::optional<double> r;
  std::optional<double> rmse;
  std::optional<double> mae;
  Index s_used = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  /// Failure messages keyed like "plsr level=0.5 std=100 trial=3".
  std::vector<std::string> errors;

  bool any_ok() const;
};

/// Settings shared by both harnesses.
struct TrialSettings {
  SyntheticSpec synthetic;
  std::vector<Algorithm> algorithms{Algorithm::plsr, Algorithm::pmcr};
  PmcrConfig pmcr;  // factors is overridden per trial
  bool center = false;
  MaeNorm mae_norm = MaeNorm::euclidean;
  /// Draw the transformation matrices once from the master seed instead of per trial.
  bool reuse_transforms = false;
  std::uint64_t master_seed = 1;
  unsigned jobs = 1;
};

struct BenchmarkConfig {
  TrialSettings settings;
  std::vector<double> levels;
  std::vector<double> stds{100.0};
  Index trials = 1;
  /// Fixed factor count; when unset S comes from PLSR cross-validation.
  std::optional<Index> factors;
  Index s_max = 100;
  Index folds = 5;

  void validate() const;
  /// levels {0, 0.2, 0.5, 0.8}, std 100, 20 trials.
  static BenchmarkConfig quick();
};

struct SweepConfig {
  TrialSettings settings;
  double level = 0.5;
  double noise_std = 100.0;
  std::vector<Index> factor_counts;  // ascending, distinct
  Index trials = 10;

  void validate() const;
};

/// Seed of trial k: the synthetic data, contamination and CV streams all derive from it.
std::uint64_t trial_seed(std::uint64_t master, Index trial);

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);
BenchmarkResult factor_sweep(const SweepConfig& cfg);

inline constexpr const char* kBenchmarkHeader = "algorithm,noise_level,noise_std,trial,axis,r,rmse,mae,s_used,seed,status";

/// Header line plus one line per row; floats with 10 significant digits.
void write_benchmark_csv(const BenchmarkResult& result, std::ostream& out);
std::string benchmark_csv(const BenchmarkResult& result);

/// Parses a grid: "start:stop[:step]" (inclusive, step 1 by default) or a comma list.
std::vector<double> parse_grid(const std::string& text);

}  // namespace robustpls
