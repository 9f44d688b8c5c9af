#include "robustpls/model_io.hpp"

#include <fstream>
#include <ostream>

namespace robustpls {

namespace {

Json vector_json(const Vector<double>& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector<double> json_vector(const Json& a, Index expected, const std::string& what) {
  if (!a.is_array() || static_cast<Index>(a.size()) != expected)
    throw ParseError("model: '" + what + "' must be an array of " + std::to_string(expected) + " numbers");
  Vector<double> v(expected);
  for (Index i = 0; i < expected; ++i) {
    const auto& e = a[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw ParseError("model: non-numeric entry " + std::to_string(i) + " in '" + what + "'");
    v(i) = e.get<double>();
  }
  return v;
}

template <typename T>
T required(const Json& doc, const char* key) {
  if (!doc.contains(key)) throw ParseError(std::string("model: missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string("model: field '") + key + "' has the wrong type");
  }
}

}  // namespace

const char* version() { return ROBUSTPLS_VERSION; }

Json model_to_json(const FactorModel<double>& model, const Json& config) {
  Json doc;
  doc["algorithm"] = to_string(model.algorithm);
  doc["S"] = model.num_factors();
  doc["N"] = model.inputs();
  doc["M"] = model.outputs();
  doc["requested_factors"] = model.requested_factors;
  doc["stop_reason"] = model.stop_reason;
  Json factors = Json::array();
  for (const auto& f : model.factors)
    factors.push_back({{"w", vector_json(f.w)}, {"c", vector_json(f.c)}, {"p", vector_json(f.p)}, {"b", f.b}});
  doc["factors"] = std::move(factors);
  Json h = Json::array();
  for (Index i = 0; i < model.h.rows(); ++i) h.push_back(vector_json(model.h.row(i).transpose()));
  doc["H"] = std::move(h);
  if (model.centered()) {
    doc["x_mean"] = vector_json(model.x_mean->transpose());
    doc["y_mean"] = vector_json(model.y_mean->transpose());
  }
  doc["config"] = config;
  doc["version"] = version();
  return doc;
}

FactorModel<double> model_from_json(const Json& doc) {
  if (!doc.is_object()) throw ParseError("model: document is not a JSON object");
  FactorModel<double> model;
  const auto algo = required<std::string>(doc, "algorithm");
  if (algo == "plsr")
    model.algorithm = Algorithm::plsr;
  else if (algo == "pmcr")
    model.algorithm = Algorithm::pmcr;
  else
    throw ParseError("model: unknown algorithm '" + algo + "'");
  const auto s = required<Index>(doc, "S");
  const auto n = required<Index>(doc, "N");
  const auto m = required<Index>(doc, "M");
  if (s < 0 || n < 1 || m < 1) throw ParseError("model: invalid dimensions");
  model.requested_factors = doc.value("requested_factors", s);
  model.stop_reason = doc.value("stop_reason", std::string());

  const auto& factors = doc.contains("factors") ? doc.at("factors") : Json();
  if (!factors.is_array() || static_cast<Index>(factors.size()) != s)
    throw ParseError("model: 'factors' must list " + std::to_string(s) + " factors");
  for (Index k = 0; k < s; ++k) {
    const auto& fj = factors[static_cast<std::size_t>(k)];
    const std::string at = "factors[" + std::to_string(k) + "].";
    if (!fj.is_object()) throw ParseError("model: " + at + " is not an object");
    LatentFactor<double> f;
    f.w = json_vector(fj.value("w", Json()), n, at + "w");
    f.c = json_vector(fj.value("c", Json()), m, at + "c");
    f.p = json_vector(fj.value("p", Json()), n, at + "p");
    if (!fj.contains("b") || !fj.at("b").is_number()) throw ParseError("model: " + at + "b missing");
    f.b = fj.at("b").get<double>();
    model.factors.push_back(std::move(f));
  }

  const auto& h = doc.contains("H") ? doc.at("H") : Json();
  if (!h.is_array() || static_cast<Index>(h.size()) != n) throw ParseError("model: 'H' must have N rows");
  model.h.resize(n, m);
  for (Index i = 0; i < n; ++i)
    model.h.row(i) = json_vector(h[static_cast<std::size_t>(i)], m, "H row " + std::to_string(i)).transpose();

  if (doc.contains("x_mean") != doc.contains("y_mean")) throw ParseError("model: x_mean and y_mean come together");
  if (doc.contains("x_mean")) {
    model.x_mean = json_vector(doc.at("x_mean"), n, "x_mean").transpose();
    model.y_mean = json_vector(doc.at("y_mean"), m, "y_mean").transpose();
  }
  if (!all_finite(model.h)) throw ParseError("model: non-finite coefficient");
  return model;
}

void save_model(const FactorModel<double>& model, const std::filesystem::path& path, const Json& config) {
  write_json_file(model_to_json(model, config), path);
}

StoredModel load_model(const std::filesystem::path& path) {
  const Json doc = read_json_file(path);
  StoredModel out{model_from_json(doc), doc.value("config", Json::object())};
  return out;
}

Json diagnostics_to_json(const FactorDiagnostics& d) {
  const auto& bw = d.bandwidths;
  return Json{{"factor", d.factor},
              {"hq_iterations", d.hq_iterations},
              {"converged", d.converged},
              {"stalled", d.stalled},
              {"start_observation", d.start_observation >= 0 ? Json(d.start_observation) : Json(nullptr)},
              {"objective_trace", d.objective_trace},
              {"bandwidths",
               {{"sigma_x", bw.sigma_x}, {"sigma_y", bw.sigma_y}, {"sigma_r", bw.sigma_r}, {"sigma_p", bw.sigma_p},
                {"sigma_b", bw.sigma_b}}},
              {"bandwidth_floored", d.bandwidth_floored},
              {"loading_iterations", d.loading_iterations},
              {"scalar_iterations", d.scalar_iterations}};
}

void write_diagnostics_jsonl(const std::vector<FactorDiagnostics>& diagnostics, std::ostream& out) {
  for (const auto& d : diagnostics) out << diagnostics_to_json(d).dump() << '\n';
}

void write_json_file(const Json& doc, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << doc.dump(2) << '\n';
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

}  // namespace robustpls
