// robustpls command-line front end.
//
// Exit codes: 0 success, 1 fit or benchmark failure, 2 usage or validation error.

#include "robustpls/benchmark.hpp"
#include "robustpls/dataset.hpp"
#include "robustpls/metrics.hpp"
#include "robustpls/model_io.hpp"
#include "robustpls/plsr.hpp"
#include "robustpls/pmcr.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace robustpls;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Thrown by command bodies to request a specific exit code.
struct ExitRequest {
  int code;
};

struct SyntheticOptions {
  SyntheticSpec spec;

  void add(CLI::App* app) {
    app->add_option("--train", spec.train_count, "Training observations")->capture_default_str();
    app->add_option("--test", spec.test_count, "Test observations")->capture_default_str();
    app->add_option("--latent", spec.latent_dim, "Latent dimension")->capture_default_str();
    app->add_option("--xdim", spec.x_dim, "Input dimension")->capture_default_str();
    app->add_option("--ydim", spec.y_dim, "Output dimension")->capture_default_str();
  }

  Json json() const {
    return {{"train", spec.train_count}, {"test", spec.test_count}, {"latent", spec.latent_dim},
            {"xdim", spec.x_dim},        {"ydim", spec.y_dim}};
  }
};

struct PmcrOptions {
  PmcrConfig cfg;
  std::optional<double> varsigma;
  std::optional<double> bandwidth;
  bool no_multistart = false;

  void add(CLI::App* app) {
    app->add_option("--hq-iters", cfg.max_hq_iters, "Half-quadratic iteration cap (0 keeps the PLSR projectors)")
        ->capture_default_str();
    app->add_option("--fp-iters", cfg.max_fp_iters, "Fixed-point iteration cap")->capture_default_str();
    app->add_option("--fp-tol", cfg.fp_tol, "Fixed-point relative step tolerance")->capture_default_str();
    app->add_option("--varsigma", varsigma, "HQ objective-change threshold (default 1e-6 * L)");
    app->add_flag("--silverman-classic", cfg.silverman_classic, "Use the rule's value as sigma instead of sigma^2");
    app->add_option("--bandwidth", bandwidth, "Use this bandwidth for all five kernels");
    app->add_flag("--no-multistart", no_multistart, "Start the fixed-point iterations from least squares only");
    app->add_option("--projector-starts", cfg.projector_starts, "Extra HQ runs per factor from single observations")
        ->capture_default_str();
  }

  PmcrConfig resolve() const {
    PmcrConfig c = cfg;
    c.varsigma = varsigma;
    if (bandwidth) c.bandwidth_override = KernelBandwidths<double>::uniform(*bandwidth);
    c.multistart = !no_multistart;
    return c;
  }

  Json json() const {
    Json j{{"hq_iters", cfg.max_hq_iters},
           {"fp_iters", cfg.max_fp_iters},
           {"fp_tol", cfg.fp_tol},
           {"silverman_classic", cfg.silverman_classic},
           {"multistart", !no_multistart},
           {"projector_starts", cfg.projector_starts}};
    j["varsigma"] = varsigma ? Json(*varsigma) : Json(nullptr);
    j["bandwidth"] = bandwidth ? Json(*bandwidth) : Json(nullptr);
    return j;
  }
};

CLI::Option* add_seed(CLI::App* app, std::uint64_t& seed) {
  return app->add_option("--seed", seed, "Master seed (env ROBUSTPLS_SEED)")->envname("ROBUSTPLS_SEED")
      ->capture_default_str();
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "plsr") return Algorithm::plsr;
  if (s == "pmcr") return Algorithm::pmcr;
  throw SpecificationError("unknown algorithm '" + s + "' (expected plsr or pmcr)");
}

std::vector<Algorithm> parse_algorithms(const std::vector<std::string>& names) {
  std::vector<Algorithm> out;
  for (const auto& n : names) out.push_back(parse_algorithm(n));
  if (out.empty()) throw SpecificationError("no algorithms given");
  return out;
}

/// "auto" or a positive integer.
std::optional<Index> parse_factor_count(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || v < 1) throw SpecificationError("--factors must be 'auto' or a positive integer");
  return static_cast<Index>(v);
}

/// Integer list "a,b,c" or inclusive range "a:b" / "a:b:step".
std::vector<Index> parse_factor_grid(const std::string& s) {
  std::vector<Index> out;
  for (double v : parse_grid(s)) {
    if (v < 1 || v != static_cast<double>(static_cast<Index>(v)))
      throw SpecificationError("factor grid '" + s + "' must hold positive integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

Json base_meta(const std::string& command, const CLI::App* sub, Json config) {
  // config_ini can be passed back through --config to repeat the run.
  // Unset options come out as key="" which does not parse back; leave them out.
  std::istringstream all(sub->config_to_str(true, false));
  std::string ini = "[" + sub->get_name() + "]\n";
  for (std::string line; std::getline(all, line);)
    if (!line.ends_with("=\"\"")) ini += line + "\n";
  return Json{{"command", command}, {"config", std::move(config)}, {"config_ini", ini}, {"version", version()}};
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Json metrics_json(const MetricsRecord& m) {
  Json axes = Json::array();
  for (std::size_t j = 0; j < m.axes(); ++j)
    axes.push_back({{"axis", j}, {"r", m.r[j] ? Json(*m.r[j]) : Json(nullptr)}, {"rmse", m.rmse[j]}, {"mae", m.mae[j]}});
  return Json{{"per_axis", axes},
              {"mean", {{"r", m.mean_r ? Json(*m.mean_r) : Json(nullptr)}, {"rmse", m.mean_rmse}, {"mae", m.mean_mae}}},
              {"joint", {{"rmse", m.joint_rmse}, {"mae", m.joint_mae}}}};
}

// ---- synth ----

struct SynthCmd {
  SyntheticOptions synth;
  std::uint64_t seed = 1;
  std::string out_dir = ".";

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("synth", "Generate the synthetic latent-variable train/test data");
    synth.add(sub);
    add_seed(sub, seed);
    sub->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    SyntheticSpec spec = synth.spec;
    spec.seed = seed;
    const auto data = generate_synthetic(spec);
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    save_matrix(data.train.x, dir / "train_x.csv");
    save_matrix(data.train.y, dir / "train_y.csv");
    save_matrix(data.test.x, dir / "test_x.csv");
    save_matrix(data.test.y, dir / "test_y.csv");
    Json cfg = synth.json();
    cfg["seed"] = seed;
    cfg["out_dir"] = out_dir;
    Json meta = base_meta("synth", sub, cfg);
    meta["files"] = {"train_x.csv", "train_y.csv", "test_x.csv", "test_y.csv"};
    write_json_file(meta, dir / "meta.json");
  }
};

// ---- contaminate ----

struct ContaminateCmd {
  std::string input, output;
  double level = 0.0;
  double noise_std = 100.0;
  std::uint64_t seed = 1;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("contaminate", "Replace a fraction of rows by Gaussian noise");
    sub->add_option("--input", input, "Input matrix CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Output matrix CSV")->required();
    sub->add_option("--level", level, "Fraction of rows replaced")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--std", noise_std, "Noise standard deviation")->check(CLI::PositiveNumber)->capture_default_str();
    add_seed(sub, seed);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const DataMatrix x = load_matrix(input);
    const auto c = contaminate(x, {level, noise_std, seed});
    ensure_parent(output);
    save_matrix(c.matrix, output);
    Json meta = base_meta("contaminate", sub,
                          {{"input", input}, {"output", output}, {"level", level}, {"std", noise_std}, {"seed", seed}});
    meta["affected_rows"] = c.affected_rows;
    write_json_file(meta, output + ".meta.json");
  }
};

// ---- fit ----

struct FitCmd {
  std::string x_path, y_path, out_path, diagnostics_path;
  std::string algo = "pmcr";
  std::string factors = "auto";
  Index s_max = 100;
  Index folds = 5;
  bool center = false;
  std::uint64_t seed = 1;
  std::vector<Index> contrib_axes;
  PmcrOptions pmcr;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("fit", "Fit a PLSR or PMCR model");
    sub->add_option("--x", x_path, "Training inputs CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--y", y_path, "Training outputs CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "Model JSON")->required();
    sub->add_option("--algo", algo, "plsr or pmcr")->check(CLI::IsMember({"plsr", "pmcr"}))->capture_default_str();
    sub->add_option("--factors", factors, "Factor count or 'auto' (PLSR cross-validation)")->capture_default_str();
    sub->add_option("--s-max", s_max, "Largest factor count tried by cross-validation")->capture_default_str();
    sub->add_option("--folds", folds, "Cross-validation folds")->capture_default_str();
    sub->add_flag("--center", center, "Subtract training column means");
    add_seed(sub, seed);
    sub->add_option("--diagnostics", diagnostics_path, "Per-factor PMCR diagnostics (JSON lines)");
    sub->add_option("--contrib-axes", contrib_axes, "Channel,frequency,lag sizes for contribution weights")
        ->expected(3)
        ->delimiter(',');
    pmcr.add(sub);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const DataMatrix x = load_matrix(x_path);
    const DataMatrix y = load_matrix(y_path);
    if (x.rows() != y.rows())
      throw SpecificationError("row counts differ: '" + x_path + "' has " + std::to_string(x.rows()) + ", '" + y_path +
                               "' has " + std::to_string(y.rows()));
    const Algorithm a = parse_algorithm(algo);
    const auto fixed = parse_factor_count(factors);
    const FitOptions opt{center};

    Json selection;
    Index s = 0;
    if (fixed) {
      s = *fixed;
      selection = {{"method", "fixed"}};
    } else {
      const auto cv = select_num_factors(x, y, s_max, folds, seed, opt);
      s = cv.best;
      selection = {{"method", "cross_validation"}, {"folds", folds}, {"s_max", s_max}, {"mean_rmse", cv.mean_rmse}};
    }

    std::vector<FactorDiagnostics> diag;
    FactorModel<double> model;
    if (a == Algorithm::plsr) {
      model = plsr_fit(x, y, s, opt);
    } else {
      PmcrConfig cfg = pmcr.resolve();
      cfg.factors = s;
      cfg.center = center;
      model = pmcr_fit(x, y, cfg, &diag);
    }

    Json cfg{{"x", x_path},          {"y", y_path},   {"out", out_path}, {"algo", algo},
             {"factors", factors},   {"s_max", s_max}, {"folds", folds},  {"center", center},
             {"seed", seed},         {"pmcr", pmcr.json()}};
    cfg["diagnostics"] = diagnostics_path;
    Json meta = base_meta("fit", sub, cfg);
    meta["s_used"] = model.num_factors();
    meta["selection"] = selection;
    if (!contrib_axes.empty()) {
      const AxisSizes sizes{contrib_axes[0], contrib_axes[1], contrib_axes[2]};
      const auto w = contribution_weights(model.h, sizes);
      meta["contributions"] = {{"layout", "channel-major, then frequency, then lag"},
                               {"sizes", contrib_axes},
                               {"channel", w.channel},
                               {"frequency", w.frequency},
                               {"lag", w.lag}};
    }
    ensure_parent(out_path);
    save_model(model, out_path, meta);
    if (!diagnostics_path.empty()) {
      std::ostringstream os;
      write_diagnostics_jsonl(diag, os);
      write_text(diagnostics_path, os.str());
    }
    if (!model.stop_reason.empty())
      std::cerr << "note: stopped after " << model.num_factors() << " factors (" << model.stop_reason << ")\n";
  }
};

// ---- predict ----

struct PredictCmd {
  std::string model_path, x_path, out_path;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("predict", "Predict outputs with a fitted model");
    sub->add_option("--model", model_path, "Model JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--x", x_path, "Input matrix CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "Prediction CSV")->required();
    sub->callback([this] { run(); });
  }

  void run() {
    const auto stored = load_model(model_path);
    const DataMatrix x = load_matrix(x_path);
    if (x.cols() != stored.model.inputs())
      throw SpecificationError("'" + x_path + "' has " + std::to_string(x.cols()) + " columns, model expects " +
                               std::to_string(stored.model.inputs()));
    ensure_parent(out_path);
    save_matrix(predict(stored.model, x), out_path);
  }
};

// ---- eval ----

struct EvalCmd {
  std::string pred_path, truth_path, out_path;
  bool mae_l1 = false;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("eval", "Score predictions against targets (r, RMSE, MAE)");
    sub->add_option("--pred", pred_path, "Prediction CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--truth", truth_path, "Target CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "Metrics JSON (stdout when omitted)");
    sub->add_flag("--mae-l1", mae_l1, "MAE over the sum of absolute components instead of the Euclidean row norm");
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    const DataMatrix p = load_matrix(pred_path);
    const DataMatrix t = load_matrix(truth_path);
    const auto m = evaluate(p, t, mae_l1 ? MaeNorm::l1 : MaeNorm::euclidean);
    Json doc = base_meta("eval", sub, {{"pred", pred_path}, {"truth", truth_path}, {"mae_l1", mae_l1}});
    doc["metrics"] = metrics_json(m);
    if (out_path.empty()) {
      std::cout << doc.dump(2) << '\n';
    } else {
      ensure_parent(out_path);
      write_json_file(doc, out_path);
    }
  }
};

// ---- bench / sweep-factors ----

struct TrialOptions {
  SyntheticOptions synth;
  PmcrOptions pmcr;
  std::vector<std::string> algos{"plsr", "pmcr"};
  unsigned jobs = 1;
  std::uint64_t seed = 1;
  bool center = false;
  bool mae_l1 = false;
  bool reuse_transforms = false;
  std::string out_path, meta_path;

  void add(CLI::App* sub) {
    synth.add(sub);
    pmcr.add(sub);
    sub->add_option("--algos", algos, "Algorithms (plsr,pmcr)")->delimiter(',')->capture_default_str();
    sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    add_seed(sub, seed);
    sub->add_flag("--center", center, "Subtract training column means");
    sub->add_flag("--mae-l1", mae_l1, "MAE over the sum of absolute components");
    sub->add_flag("--reuse-transforms", reuse_transforms, "Share the transformation matrices across trials");
    sub->add_option("--out", out_path, "Output CSV")->required();
    sub->add_option("--meta", meta_path, "Run metadata JSON (default: <out>.meta.json)");
  }

  TrialSettings settings() const {
    TrialSettings s;
    s.synthetic = synth.spec;
    s.algorithms = parse_algorithms(algos);
    s.pmcr = pmcr.resolve();
    s.center = center;
    s.mae_norm = mae_l1 ? MaeNorm::l1 : MaeNorm::euclidean;
    s.reuse_transforms = reuse_transforms;
    s.master_seed = seed;
    s.jobs = jobs;
    return s;
  }

  Json json() const {
    // jobs is left out: the output does not depend on it.
    return {{"synthetic", synth.json()}, {"pmcr", pmcr.json()},         {"algos", algos},
            {"seed", seed},              {"center", center},            {"mae_l1", mae_l1},
            {"reuse_transforms", reuse_transforms}, {"out", out_path}};
  }

  void finish(const std::string& command, const CLI::App* sub, Json cfg, const BenchmarkResult& res) const {
    write_text(out_path, benchmark_csv(res));
    Json meta = base_meta(command, sub, std::move(cfg));
    meta["rows"] = res.rows.size();
    meta["errors"] = res.errors;
    write_json_file(meta, meta_path.empty() ? out_path + ".meta.json" : meta_path);
    for (const auto& e : res.errors) std::cerr << "fit failed: " << e << '\n';
    if (!res.any_ok()) throw ExitRequest{kExitFailure};
  }
};

struct BenchCmd {
  TrialOptions trial;
  std::string preset;
  std::string levels = "0:1:0.05";
  std::string stds = "30,100,300";
  Index trials = 100;
  std::string factors = "auto";
  Index s_max = 100;
  Index folds = 5;
  CLI::Option* levels_opt = nullptr;
  CLI::Option* stds_opt = nullptr;
  CLI::Option* trials_opt = nullptr;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("bench", "Monte-Carlo robustness benchmark over noise levels and stds");
    sub->add_option("--preset", preset, "Named preset: quick (levels 0,0.2,0.5,0.8; std 100; 20 trials)")
        ->check(CLI::IsMember({"quick"}));
    levels_opt = sub->add_option("--levels", levels, "Noise levels: start:stop:step or a list")->capture_default_str();
    stds_opt = sub->add_option("--stds", stds, "Noise stds: start:stop:step or a list")->capture_default_str();
    trials_opt = sub->add_option("--trials", trials, "Trials per cell")->capture_default_str();
    sub->add_option("--factors", factors, "Factor count or 'auto' (PLSR cross-validation per trial)")
        ->capture_default_str();
    sub->add_option("--s-max", s_max, "Largest factor count tried by cross-validation")->capture_default_str();
    sub->add_option("--folds", folds, "Cross-validation folds")->capture_default_str();
    trial.add(sub);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    BenchmarkConfig cfg;
    if (preset == "quick") {
      const auto q = BenchmarkConfig::quick();
      if (levels_opt->count() == 0) levels = "0,0.2,0.5,0.8";
      if (stds_opt->count() == 0) stds = "100";
      if (trials_opt->count() == 0) trials = q.trials;
    }
    cfg.settings = trial.settings();
    cfg.levels = parse_grid(levels);
    cfg.stds = parse_grid(stds);
    cfg.trials = trials;
    cfg.factors = parse_factor_count(factors);
    cfg.s_max = s_max;
    cfg.folds = folds;
    const auto res = run_benchmark(cfg);
    Json j = trial.json();
    j["preset"] = preset;
    j["levels"] = cfg.levels;
    j["stds"] = cfg.stds;
    j["trials"] = trials;
    j["factors"] = factors;
    j["s_max"] = s_max;
    j["folds"] = folds;
    trial.finish("bench", sub, j, res);
  }
};

struct SweepCmd {
  TrialOptions trial;
  double level = 0.5;
  double noise_std = 100.0;
  std::string factors = "1:100";
  Index trials = 10;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("sweep-factors", "Test metrics as a function of the factor count");
    sub->add_option("--level", level, "Noise level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--std", noise_std, "Noise std")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--factors", factors, "Factor counts: a:b, a:b:step or a list")->capture_default_str();
    sub->add_option("--trials", trials, "Trials")->capture_default_str();
    trial.add(sub);
    sub->callback([this, sub] { run(sub); });
  }

  void run(const CLI::App* sub) {
    SweepConfig cfg;
    cfg.settings = trial.settings();
    cfg.level = level;
    cfg.noise_std = noise_std;
    cfg.factor_counts = parse_factor_grid(factors);
    cfg.trials = trials;
    const auto res = factor_sweep(cfg);
    Json j = trial.json();
    j["level"] = level;
    j["std"] = noise_std;
    j["factors"] = cfg.factor_counts;
    j["trials"] = trials;
    trial.finish("sweep-factors", sub, j, res);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust partial least squares regression (PLSR and PMCR)"};
  app.set_version_flag("--version", std::string(version()));
  app.set_config("--config", "", "INI-style config file; command-line flags take precedence");
  app.require_subcommand(1, 1);

  SynthCmd synth;
  ContaminateCmd contaminate_cmd;
  FitCmd fit;
  PredictCmd predict_cmd;
  EvalCmd eval;
  BenchCmd bench;
  SweepCmd sweep;
  synth.add(app);
  contaminate_cmd.add(app);
  fit.add(app);
  predict_cmd.add(app);
  eval.add(app);
  bench.add(app);
  sweep.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const ExitRequest& r) {
    return r.code;
  } catch (const SpecificationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
