/*
 * Copyright 2026 The vdpt Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: simulate, train, evaluate, search, explain, drift
// and serve. Every subcommand writes JSON artifacts and exits non-zero with a
// JSON error object on stderr when something goes wrong.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vdpt/drift.hpp"
#include "vdpt/evaluation.hpp"
#include "vdpt/http_server.hpp"
#include "vdpt/service.hpp"

namespace fs = std::filesystem;
using namespace vdpt;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

// Model configuration from --model, --profile, an optional --config file and
// --seed (the seed always wins).
struct ModelOptions {
  std::string model = "mlp";
  std::string profile = "desk";
  std::string config;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app, bool allow_both = false) {
    std::vector<std::string> kinds{"mlp", "vdp", "deterministic", "stochastic"};
    if (allow_both) kinds.push_back("both");
    app->add_option("--model", model, allow_both ? "mlp, vdp or both" : "mlp (deterministic) or vdp (stochastic)")
        ->check(CLI::IsMember(kinds));
    app->add_option("--profile", profile, "hyperparameter profile")->check(CLI::IsMember({"desk", "full"}));
    app->add_option("--config", config, "model configuration JSON (overrides the profile)");
    app->add_option("--seed", seed, "random seed");
  }

  ModelConfig resolve(ModelKind kind) const {
    ModelConfig c = profile == "full" ? ModelConfig::full(kind) : ModelConfig::desk(kind);
    if (!config.empty()) {
      nlohmann::json j = read_json(config);
      if (!j.contains("kind")) j["kind"] = model_kind_name(kind);
      c = ModelConfig::from_json(j);
      if (c.kind != kind) throw Error(ErrorCode::kInvalidArgument, "--config kind disagrees with --model");
    }
    c.base().seed = seed;
    return c;
  }
  ModelConfig resolve() const { return resolve(parse_model_kind(model)); }
};

void print_metric_table(const std::vector<std::pair<std::string, const CvResult*>>& rows) {
  // Layout: one row per model, mean (standard error) for each column.
  const std::vector<std::pair<std::string, std::string>> cols{
      {"precision", "Precision"},     {"sensitivity", "Sensitivity"}, {"specificity", "Specificity"},
      {"roc_auc", "ROC AUC"},         {"prc_auc", "PRC AUC"},         {"balanced_accuracy", "Balanced Accuracy"},
      {"lr_plus", "LR+"}};
  std::cout << std::left << std::setw(14) << "Model";
  for (const auto& [_, title] : cols) std::cout << std::setw(20) << title;
  std::cout << "\n";
  for (const auto& [name, cv] : rows) {
    std::cout << std::setw(14) << name;
    for (const auto& [key, _] : cols) {
      const MetricSummary& s = cv->summary.at(key);
      std::ostringstream cell;
      if (std::isinf(s.mean)) {
        cell << "inf";
      } else {
        cell << std::fixed << std::setprecision(3) << s.mean << " (" << s.std_error << ")";
      }
      std::cout << std::setw(20) << cell.str();
    }
    std::cout << "\n";
  }
}

HttpServer* g_server = nullptr;
void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::vector<ModelKind> kinds_for(const std::string& model) {
  if (model == "both") return {ModelKind::kMlp, ModelKind::kVdp};
  return {parse_model_kind(model)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vdpt: in-hospital mortality models with uncertainty, explanations and drift checks"};
  app.require_subcommand(1);

  // simulate ---------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort CSV");
  Index sim_rows = SyntheticDefaults::kRows;
  double sim_prev = SyntheticDefaults::kPrevalence, sim_missing = SyntheticDefaults::kMissingRate;
  std::uint64_t sim_seed = SyntheticDefaults::kSeed;
  std::vector<std::string> sim_shift;
  std::optional<double> sim_shift_prev;
  std::string sim_out;
  sim->add_option("--rows", sim_rows, "number of rows");
  sim->add_option("--prevalence", sim_prev, "positive-class prevalence");
  sim->add_option("--missing-rate", sim_missing, "MCAR missingness rate");
  sim->add_option("--shift", sim_shift, "mean shift in sd units, e.g. lactate=1.0 (repeatable)");
  sim->add_option("--shift-prevalence", sim_shift_prev, "prevalence override emulating cohort drift");
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output CSV")->required();

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "fit a model and write its artifact");
  ModelOptions train_opts;
  std::string train_data, train_out, train_dir;
  train_opts.add_to(train);
  train->add_option("--data", train_data, "training CSV")->required();
  train->add_option("--out", train_out, "artifact path");
  train->add_option("--artifacts-dir", train_dir, "write <dir>/<model>.json instead of --out");

  // evaluate ---------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "stratified k-fold cross-validation");
  ModelOptions eval_opts;
  std::string eval_data, eval_out;
  int eval_folds = 10;
  eval_opts.add_to(eval, true);
  eval->add_option("--data", eval_data, "cohort CSV (default: the built-in synthetic cohort)");
  eval->add_option("--folds", eval_folds, "number of folds");
  eval->add_option("--out", eval_out, "results JSON");

  // search -----------------------------------------------------------------
  auto* search = app.add_subcommand("search", "seeded random hyperparameter search ranked by LR+");
  ModelOptions search_opts;
  std::string search_data, search_space, search_out;
  int search_budget = 10, search_folds = 3;
  search_opts.add_to(search);
  search->add_option("--data", search_data, "cohort CSV")->required();
  search->add_option("--space", search_space, "search space JSON");
  search->add_option("--budget", search_budget, "number of sampled configurations");
  search->add_option("--folds", search_folds, "folds per configuration");
  search->add_option("--out", search_out, "leaderboard JSON");

  // explain ----------------------------------------------------------------
  auto* explain = app.add_subcommand("explain", "local feature importance of one row");
  std::string ex_artifact, ex_data, ex_out;
  Index ex_row = 0;
  InfluenceConfig ex_cfg = ServiceConfig::default_influence();
  explain->add_option("--artifact", ex_artifact, "model artifact JSON")->required();
  explain->add_option("--data", ex_data, "CSV holding the row")->required();
  explain->add_option("--row", ex_row, "zero-based row index");
  explain->add_option("--subsample", ex_cfg.subsample, "training rows averaged (default: all)");
  explain->add_option("--hessian-subsample", ex_cfg.hessian_subsample, "rows entering the Hessian (0 = all)");
  explain->add_option("--damping", ex_cfg.damping, "Hessian damping");
  explain->add_option("--curvature-probe", ex_cfg.curvature_probe_steps,
                      "Lanczos steps for the curvature shift (0 = off)");
  explain->add_option("--seed", ex_cfg.subsample_seed, "subsample seed");
  explain->add_option("--out", ex_out, "report JSON");

  // drift ------------------------------------------------------------------
  auto* drift = app.add_subcommand("drift", "compare a current cohort with a reference cohort");
  std::string dr_ref, dr_cur, dr_artifact, dr_out;
  DriftOptions dr_opts;
  drift->add_option("--reference", dr_ref, "reference CSV")->required();
  drift->add_option("--current", dr_cur, "current CSV")->required();
  drift->add_option("--artifact", dr_artifact, "stochastic model artifact for the confidence test");
  drift->add_option("--alpha", dr_opts.alpha, "family-wise significance level");
  drift->add_option("--out", dr_out, "report JSON");

  // serve ------------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "HTTP API over trained artifacts");
  std::string sv_dir, sv_data, sv_ranges, sv_static;
  std::string sv_records = env_or("VDPT_DATA_DIR", "vdpt-data");
  HttpOptions sv_http;
  Index sv_floor = 10;
  serve->add_option("--artifacts-dir", sv_dir, "directory with mlp.json and vdp.json")->required();
  serve->add_option("--data", sv_data, "training CSV (statistics and drift reference)")->required();
  serve->add_option("--ranges", sv_ranges, "reference ranges JSON (default: shipped file)");
  serve->add_option("--data-dir", sv_records, "record store directory (env VDPT_DATA_DIR)");
  serve->add_option("--static-dir", sv_static, "web client build to serve at /");
  serve->add_option("--host", sv_http.host, "bind address");
  serve->add_option("--port", sv_http.port, "port");
  serve->add_option("--drift-min-records", sv_floor, "labelled records needed for /api/drift");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      ShiftSpec shift;
      for (const std::string& s : sim_shift) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::kInvalidSpec, "--shift expects name=value");
        shift.mean_shift[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
      }
      shift.prevalence = sim_shift_prev;
      SeededRng rng(sim_seed);
      save_csv(sim_out, generate_synthetic_cohort(sim_rows, sim_prev, shift, sim_missing, rng));
    } else if (*train) {
      const ModelConfig cfg = train_opts.resolve();
      const ModelArtifact a = fit_model(load_csv(train_data), cfg);
      std::string out = train_out;
      if (!train_dir.empty()) out = (fs::path(train_dir) / (std::string(model_kind_name(cfg.kind)) + ".json")).string();
      if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "train needs --out or --artifacts-dir");
      write_json(a.to_json(), out);
    } else if (*eval) {
      const Cohort cohort = eval_data.empty() ? default_synthetic_cohort() : load_csv(eval_data);
      std::vector<CvResult> results;
      for (ModelKind kind : kinds_for(eval_opts.model)) {
        results.push_back(cross_validate(cohort, eval_opts.resolve(kind), eval_folds, eval_opts.seed));
      }
      std::vector<std::pair<std::string, const CvResult*>> rows;
      nlohmann::json j{{"format", "vdpt.evaluation/1"}, {"results", nlohmann::json::array()}};
      for (const auto& r : results) {
        rows.emplace_back(model_kind_name(r.config.kind), &r);
        j["results"].push_back(r.to_json());
      }
      if (results.size() == 2) {
        const stats::TTest t = paired_metric_test(results[0], results[1], "roc_auc");
        j["paired_t_test"] = {{"metric", "roc_auc"}, {"t", t.t}, {"p", t.p}, {"dof", t.dof}};
      }
      print_metric_table(rows);
      if (!eval_out.empty()) write_json(j, eval_out);
    } else if (*search) {
      const SearchSpace space = search_space.empty() ? SearchSpace{} : SearchSpace::from_json(read_json(search_space));
      const SearchResult r = random_search(load_csv(search_data), search_opts.resolve(), space, search_budget,
                                           search_folds, search_opts.seed);
      write_json(r.to_json(), search_out);
    } else if (*explain) {
      const ModelArtifact a = ModelArtifact::load(ex_artifact);
      const Cohort rows = load_csv(ex_data);
      if (ex_row < 0 || ex_row >= rows.rows()) throw Error(ErrorCode::kInvalidArgument, "--row out of range");
      const Index idx[] = {ex_row};
      const Vector x = a.preprocessor.transform(rows.subset(idx)).row(0).transpose();
      write_json(a.explain(x, ex_cfg, std::nullopt, "row-" + std::to_string(ex_row)).to_json(), ex_out);
    } else if (*drift) {
      std::optional<ModelArtifact> artifact;
      std::optional<ConfidenceModel> cm;
      if (!dr_artifact.empty()) {
        artifact = ModelArtifact::load(dr_artifact);
        if (artifact->kind() != ModelKind::kVdp) {
          throw Error(ErrorCode::kInvalidArgument, "--artifact must be a stochastic (vdp) model");
        }
        const ModelArtifact* m = &*artifact;
        cm = ConfidenceModel{m->vdp, m->variance_cdf, [m](const Cohort& c) { return m->preprocessor.transform(c); }};
      }
      const DriftReport report = drift_report(load_csv(dr_ref), load_csv(dr_cur), cm ? &*cm : nullptr, dr_opts);
      std::cerr << "drift: " << report.flagged_features().size() << " feature(s) flagged";
      for (const auto& f : report.flagged_features()) std::cerr << " " << f;
      std::cerr << "; label shift " << (report.label_flagged ? "flagged" : "not flagged") << "\n";
      write_json(report.to_json(), dr_out);
    } else if (*serve) {
      auto mlp = std::make_shared<const ModelArtifact>(ModelArtifact::load(fs::path(sv_dir) / "mlp.json"));
      auto vdp = std::make_shared<const ModelArtifact>(ModelArtifact::load(fs::path(sv_dir) / "vdp.json"));
      const ReferenceRanges ranges = sv_ranges.empty() ? ReferenceRanges::defaults() : ReferenceRanges::load(sv_ranges);
      RecordStore store(sv_records);
      ServiceConfig cfg;
      cfg.drift_min_records = sv_floor;
      if (const char* token = std::getenv("VDPT_API_TOKEN"); token != nullptr && *token != '\0') cfg.token = token;
      const Api api(mlp, vdp, load_csv(sv_data), ranges, store, cfg);
      if (!sv_static.empty()) sv_http.static_dir = sv_static;
      HttpServer server(api, sv_http);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cerr << "vdpt: serving on http://" << sv_http.host << ":" << port << "\n";
      server.serve();
      g_server = nullptr;
      store.snapshot();
    }
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", std::string(error_code_name(e.code()))}, {"detail", e.what()}}.dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"detail", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}
