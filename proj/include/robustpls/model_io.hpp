#pragma once

#include "robustpls/plsr.hpp"
#include "robustpls/pmcr.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace robustpls {

using Json = nlohmann::json;

/// Library version string embedded in every written artifact.
const char* version();

/// Model document: algorithm, S, N, M, per-factor {w, c, p, b}, H,
/// optional centering means, stop reason, config echo and version.
Json model_to_json(const FactorModel<double>& model, const Json& config = Json::object());

/// Inverse of model_to_json. Scores t and u are not stored and come back empty.
FactorModel<double> model_from_json(const Json& doc);

struct StoredModel {
  FactorModel<double> model;
  Json config;
};

void save_model(const FactorModel<double>& model, const std::filesystem::path& path,
                const Json& config = Json::object());
StoredModel load_model(const std::filesystem::path& path);

Json diagnostics_to_json(const FactorDiagnostics& d);

/// One JSON object per line.
void write_diagnostics_jsonl(const std::vector<FactorDiagnostics>& diagnostics, std::ostream& out);

void write_json_file(const Json& doc, const std::filesystem::path& path);
Json read_json_file(const std::filesystem::path& path);

}  // namespace robustpls
