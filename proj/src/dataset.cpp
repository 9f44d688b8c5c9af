#include "robustpls/dataset.hpp"

#include "robustpls/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

namespace robustpls {

void RegressionDataset::validate(const std::string& name) const {
  check_data_matrix(x, name + ".x");
  check_data_matrix(y, name + ".y");
  if (x.rows() != y.rows())
    throw SpecificationError(name + ": x has " + std::to_string(x.rows()) + " rows but y has " +
                             std::to_string(y.rows()));
}

void SyntheticSpec::validate() const {
  if (train_count < 1 || test_count < 1 || latent_dim < 1 || x_dim < 1 || y_dim < 1)
    throw SpecificationError("synthetic spec: all counts must be >= 1");
  if (latent_dim > std::min(x_dim, train_count))
    throw SpecificationError("synthetic spec: latent_dim (" + std::to_string(latent_dim) +
                             ") must not exceed min(x_dim, train_count) = " +
                             std::to_string(std::min(x_dim, train_count)));
}

void ContaminationSpec::validate() const {
  if (!(level >= 0.0 && level <= 1.0))
    throw SpecificationError("contamination level must lie in [0, 1], got " + std::to_string(level));
  if (!(noise_std > 0.0) || !std::isfinite(noise_std))
    throw SpecificationError("contamination noise_std must be positive and finite");
}

namespace {

DataMatrix draw_uniform_latents(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  DataMatrix t(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) t(i, j) = rng.uniform();
  return t;
}

DataMatrix draw_normal(Index rows, Index cols, Rng& rng) {
  DataMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

LatentTransforms draw_transforms(const SyntheticSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "transforms"));
  LatentTransforms tr;
  tr.to_x = draw_normal(spec.latent_dim, spec.x_dim, rng);
  tr.to_y = draw_normal(spec.latent_dim, spec.y_dim, rng);
  return tr;
}

SyntheticPair generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  return generate_synthetic(spec, draw_transforms(spec, spec.seed));
}

SyntheticPair generate_synthetic(const SyntheticSpec& spec, const LatentTransforms& tr) {
  spec.validate();
  if (tr.to_x.rows() != spec.latent_dim || tr.to_x.cols() != spec.x_dim ||
      tr.to_y.rows() != spec.latent_dim || tr.to_y.cols() != spec.y_dim)
    throw SpecificationError("synthetic transforms do not match the spec dimensions");

  const DataMatrix t_train = draw_uniform_latents(spec.train_count, spec.latent_dim,
                                                  derive_seed(spec.seed, "latent-train"));
  const DataMatrix t_test = draw_uniform_latents(spec.test_count, spec.latent_dim,
                                                 derive_seed(spec.seed, "latent-test"));
  SyntheticPair out;
  out.train.x = t_train * tr.to_x;
  out.train.y = t_train * tr.to_y;
  out.test.x = t_test * tr.to_x;
  out.test.y = t_test * tr.to_y;
  return out;
}

Index contaminated_row_count(double level, Index rows) {
  // nearbyint honours the default FE_TONEAREST mode: ties go to even.
  return static_cast<Index>(std::nearbyint(level * static_cast<double>(rows)));
}

Contaminated contaminate(const DataMatrix& x, const ContaminationSpec& spec) {
  spec.validate();
  check_data_matrix(x, "contaminate input");
  const Index count = contaminated_row_count(spec.level, x.rows());

  Rng rng(derive_seed(spec.seed, "contamination"));
  auto picked = rng.sample_without_replacement(static_cast<std::size_t>(x.rows()),
                                               static_cast<std::size_t>(count));
  std::sort(picked.begin(), picked.end());

  Contaminated out{x, {}};
  out.affected_rows.reserve(picked.size());
  for (const auto row : picked) {
    const auto r = static_cast<Index>(row);
    for (Index j = 0; j < x.cols(); ++j) out.matrix(r, j) = spec.noise_std * rng.normal();
    out.affected_rows.push_back(r);
  }
  return out;
}

DataMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file: " + path.string());

  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    Index fields = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::size_t end = comma == std::string::npos ? line.size() : comma;
      std::size_t b = pos;
      std::size_t e = end;
      while (b < e && (line[b] == ' ' || line[b] == '\t')) ++b;
      while (e > b && (line[e - 1] == ' ' || line[e - 1] == '\t')) --e;
      if (b < e && line[b] == '+') ++b;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, v);
      if (b == e || ec != std::errc() || ptr != line.data() + e || !std::isfinite(v))
        throw ParseError(path.string() + ": row " + std::to_string(rows + 1) + ", column " +
                         std::to_string(fields + 1) + ": not a finite number: '" +
                         line.substr(pos, end - pos) + "'");
      values.push_back(v);
      ++fields;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cols < 0) {
      cols = fields;
    } else if (fields != cols) {
      throw ParseError(path.string() + ": row " + std::to_string(rows + 1) + " (line " +
                       std::to_string(line_no) + ") has " + std::to_string(fields) +
                       " fields, expected " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(path.string() + ": no data rows");

  DataMatrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

void save_matrix(const DataMatrix& m, const std::filesystem::path& path) {
  check_data_matrix(m, "save_matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write matrix file: " + path.string());
  char buf[64];
  std::string line;
  for (Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) line.push_back(',');
      const auto res = std::to_chars(buf, buf + sizeof buf, m(i, j), std::chars_format::general, 17);
      line.append(buf, res.ptr);
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace robustpls
