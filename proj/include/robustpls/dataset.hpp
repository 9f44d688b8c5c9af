#pragma once

#include "robustpls/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace robustpls {

/// Paired explanatory (L x N) and response (L x M) matrices.
struct RegressionDataset {
  DataMatrix x;
  DataMatrix y;

  Index observations() const { return x.rows(); }
  void validate(const std::string& name = "dataset") const;
};

/// Latent-variable generative model: rows of T ~ U(0,1]^latent_dim,
/// X = T A and Y = T B with A, B standard normal and shared by train and test.
struct SyntheticSpec {
  Index train_count = 300;
  Index test_count = 300;
  Index latent_dim = 20;
  Index x_dim = 500;
  Index y_dim = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ContaminationSpec {
  double level = 0.0;
  double noise_std = 100.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticPair {
  RegressionDataset train;
  RegressionDataset test;
};

/// Transformation matrices of the generative model (latent_dim x x_dim, latent_dim x y_dim).
struct LatentTransforms {
  DataMatrix to_x;
  DataMatrix to_y;
};

LatentTransforms draw_transforms(const SyntheticSpec& spec, std::uint64_t seed);

SyntheticPair generate_synthetic(const SyntheticSpec& spec);

/// As above but with caller-supplied transforms; the latents still come from spec.seed.
SyntheticPair generate_synthetic(const SyntheticSpec& spec, const LatentTransforms& transforms);

struct Contaminated {
  DataMatrix matrix;
  std::vector<Index> affected_rows;  // ascending
};

/// Number of rows replaced for a level: round(level * rows), ties to even.
Index contaminated_row_count(double level, Index rows);

/// Replaces round(level * L) uniformly chosen rows by i.i.d. N(0, noise_std^2) draws.
Contaminated contaminate(const DataMatrix& x, const ContaminationSpec& spec);

/// Plain-text CSV, no header, one observation per line.
DataMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const DataMatrix& m, const std::filesystem::path& path);

}  // namespace robustpls
