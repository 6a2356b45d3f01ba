// Command-line driver: ingest, train, tune, evaluate, loco,
// external-validate, explain, pdp, runs, serve, synth.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "uplift/http.hpp"
#include "uplift/uplift.hpp"

namespace fs = std::filesystem;
using namespace uplift;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kModel = 4 };

struct Options {
  std::string data;
  std::string model = "et";
  std::uint64_t seed = 3;
  double split = 0.7;
  bool stratify = false;
  bool no_preprocess = false;
  bool reduced_features = false;
  std::string out;
  std::string bundle;
  std::string store;
  std::string schema;
  std::string experiment;
  std::string grid;
  std::size_t folds = 5;
  std::size_t workers = 1;
  std::size_t rows = 0;
  std::string x = "power_w";
  std::string y = "plasma_time_s";
  std::size_t res = 20;
  std::string filter;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t n = 500;
  std::vector<std::string> params;  // key=value hyperparameter overrides
};

// Config files are one flat JSON object. Keys mirror the long flag names
// with '-' replaced by '_'; "hp.<name>" sets a hyperparameter.
void apply_config(const fs::path& path, Options& o) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const DataError&) {
    throw ConfigError("cannot read config file '" + path.string() + "'");
  } catch (const std::exception& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config file must be a flat JSON object");
  for (const auto& [key, v] : doc.items()) {
    try {
      if (key.rfind("hp.", 0) == 0) {
        o.params.push_back(key.substr(3) + "=" + v.dump());
      } else if (key == "data") o.data = v.get<std::string>();
      else if (key == "model") o.model = v.get<std::string>();
      else if (key == "seed") o.seed = v.get<std::uint64_t>();
      else if (key == "split") o.split = v.get<double>();
      else if (key == "stratify") o.stratify = v.get<bool>();
      else if (key == "no_preprocess") o.no_preprocess = v.get<bool>();
      else if (key == "reduced_features") o.reduced_features = v.get<bool>();
      else if (key == "out") o.out = v.get<std::string>();
      else if (key == "bundle") o.bundle = v.get<std::string>();
      else if (key == "store") o.store = v.get<std::string>();
      else if (key == "schema") o.schema = v.get<std::string>();
      else if (key == "experiment") o.experiment = v.get<std::string>();
      else if (key == "grid") o.grid = v.get<std::string>();
      else if (key == "folds") o.folds = v.get<std::size_t>();
      else if (key == "workers") o.workers = v.get<std::size_t>();
      else if (key == "host") o.host = v.get<std::string>();
      else if (key == "port") o.port = v.get<int>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  }
}

std::optional<std::string> find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

ParamMap parse_overrides(const std::vector<std::string>& items) {
  ParamMap m;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("hyperparameter override must be key=value: " + item);
    const std::string value = item.substr(eq + 1);
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || *end != '\0') throw ConfigError("hyperparameter '" + item.substr(0, eq) + "' needs a number");
    m[item.substr(0, eq)] = v;
  }
  return m;
}

LearnerConfig learner_from(const Options& o) {
  auto l = LearnerConfig::from_name(o.model);
  const auto overrides = parse_overrides(o.params);
  return overrides.empty() ? l : l.with(overrides);
}

PipelineStages stages_from(const Options& o) { return o.no_preprocess ? PipelineStages::none() : PipelineStages{}; }

fs::path store_root(const Options& o) {
  if (!o.store.empty()) return o.store;
  if (const char* env = std::getenv("UPLIFT_STORE"); env && *env) return env;
  return "mlruns";
}

Dataset load_data(const Options& o) {
  if (o.data.empty()) throw ConfigError("--data is required");
  const auto schema = o.schema.empty() ? FeatureSchema::canonical() : FeatureSchema::from_file(o.schema);
  return load_csv(o.data, schema);
}

ServingBundle load_bundle_opt(const Options& o) {
  if (o.bundle.empty()) throw ConfigError("--bundle is required");
  return load_bundle(o.bundle);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

// Wraps one command in a tracked run: params up front, status at the end.
class TrackedRun {
 public:
  TrackedRun(const Options& o, const std::string& command, std::map<std::string, std::string> params)
      : store_(store_root(o)) {
    params["command"] = command;
    run_ = store_.start_run(o.experiment.empty() ? command : o.experiment, std::move(params));
  }
  ~TrackedRun() {
    if (run_.status == RunStatus::running) {
      try {
        store_.finish_run(run_, RunStatus::failed);
      } catch (...) {
      }
    }
  }
  void metric(const std::string& name, double v, std::int64_t step = 0) { store_.log_metric(run_, name, v, step); }
  void metrics(const std::string& prefix, const Metrics& m) {
    metric(prefix + "rmse", m.rmse);
    metric(prefix + "mae", m.mae);
    if (m.r2) metric(prefix + "r2", *m.r2);
  }
  void artifact(const std::string& name, const std::string& text) { store_.log_artifact_text(run_, name, text); }
  void artifact_file(const fs::path& p, const std::string& name) { store_.log_artifact(run_, p, name); }
  void tag(const std::string& k, const std::string& v) { store_.set_tag(run_, k, v); }
  void finish() { store_.finish_run(run_, RunStatus::finished); }
  const std::string& id() const { return run_.run_id; }

 private:
  RunStore store_;
  RunRecord run_;
};

std::map<std::string, std::string> common_params(const Options& o) {
  return {{"data", o.data}, {"seed", std::to_string(o.seed)}, {"workers", std::to_string(o.workers)}};
}

std::map<std::string, std::string> model_params(const Options& o) {
  auto p = common_params(o);
  p["model"] = o.model;
  p["split"] = format_number(o.split);
  p["stratify"] = o.stratify ? "true" : "false";
  p["preprocess"] = o.no_preprocess ? "false" : "true";
  p["reduced_features"] = o.reduced_features ? "true" : "false";
  for (const auto& [k, v] : parse_overrides(o.params)) p["hp." + k] = format_number(v);
  return p;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

// ---------------------------------------------------------------- commands ---

int cmd_ingest(const Options& o) {
  const auto raw = load_data(o);
  TrackedRun run(o, "ingest", common_params(o));
  run.tag("dataset_fingerprint", raw.fingerprint);
  const auto ds = impute_within_species(raw);

  nlohmann::json report;
  report["rows"] = raw.size();
  report["fingerprint"] = raw.fingerprint;
  report["species"] = raw.species();
  report["cultivars"] = raw.cultivars();
  nlohmann::json missing = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumericCount; ++k) missing[std::string(kNumericNames[k])] = raw.missing_counts[k];
  report["missing"] = missing;
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& s : describe(raw))
    stats.push_back({{"name", s.name}, {"n", s.n}, {"missing", s.missing}, {"mean", s.mean}, {"sd", s.sd},
                     {"min", s.min}, {"max", s.max}, {"skewness", optional_json(s.skewness)},
                     {"kurtosis", optional_json(s.kurtosis)}});
  report["describe"] = stats;
  nlohmann::json fits = nlohmann::json::array();
  const auto uni = univariate_fits(ds);
  for (const auto& f : uni.fits)
    fits.push_back({{"feature", f.feature}, {"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}, {"n", f.n}});
  report["univariate"] = fits;
  report["univariate_skipped"] = uni.skipped;

  // Normality before and after a fitted Yeo-Johnson transform.
  nlohmann::json normality = nlohmann::json::array();
  const auto enc = encode_features(ds, false);
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    const auto col = enc.X.column(k);
    if (col.size() < 3 || col.size() > 5000 || std::set<double>(col.begin(), col.end()).size() < 3) continue;
    const auto fit = fit_yeo_johnson(col);
    std::vector<double> t(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) t[i] = yeo_johnson(col[i], fit.lambda);
    try {
      const auto before = shapiro_wilk(col), after = shapiro_wilk(t);
      normality.push_back({{"feature", std::string(kNumericNames[k])}, {"lambda", fit.lambda}, {"w_before", before.w},
                           {"p_before", before.p_value}, {"w_after", after.w}, {"p_after", after.p_value}});
    } catch (const DomainError&) {
    }
  }
  report["normality"] = normality;

  if (!o.out.empty()) write_text(o.out, to_csv(ds));
  run.metric("rows", static_cast<double>(raw.size()));
  run.metric("missing_cells", static_cast<double>(raw.total_missing()));
  run.artifact("ingest.json", report.dump(2));
  run.finish();
  report["run_id"] = run.id();
  print(report);
  return kOk;
}

int cmd_train(const Options& o) {
  const auto raw = load_data(o);
  TrainRequest req;
  req.learner = learner_from(o);
  req.stages = stages_from(o);
  req.seed = o.seed;
  req.split_ratio = o.split;
  req.stratify = o.stratify;
  req.reduced_features = o.reduced_features;
  req.workers = o.workers;

  TrackedRun run(o, "train", model_params(o));
  run.tag("dataset_fingerprint", raw.fingerprint);
  auto out = train_model(raw, req);
  out.bundle.meta.run_id = run.id();

  run.metrics("train_", out.train_report.metrics);
  run.metrics("test_", out.test_report.metrics);
  run.metrics("", out.test_report.metrics);
  const auto bundle_json = to_json(out.bundle).dump();
  if (!o.out.empty()) write_text(o.out, bundle_json);
  run.artifact("bundle.json", bundle_json);
  run.artifact("residuals.csv", residuals_csv(out.test_report));
  run.artifact("test_report.json", to_json(out.test_report).dump(2));
  if (out.importance) run.artifact("importance.json", to_json(*out.importance).dump(2));
  run.finish();

  for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
  print({{"run_id", run.id()},
         {"model", req.learner.name},
         {"features", out.bundle.learner.pipeline.feature_names_out},
         {"train", to_json(out.train_report.metrics)},
         {"test", to_json(out.test_report.metrics)},
         {"bundle", o.out.empty() ? nlohmann::json(nullptr) : nlohmann::json(o.out)}});
  return kOk;
}

int cmd_tune(const Options& o) {
  if (o.grid.empty()) throw ConfigError("--grid is required");
  const auto grid = grid_from_text(read_file(o.grid));
  const auto raw = load_data(o);
  const auto ds = impute_within_species(raw);
  const auto all = encode_features(ds);
  const auto split = o.stratify ? train_test_split(ds.size(), o.split, o.seed, all.species)
                                : train_test_split(ds.size(), o.split, o.seed);
  const auto train = all.subset(split.train);

  auto params = model_params(o);
  params["grid"] = o.grid;
  params["folds"] = std::to_string(o.folds);
  TrackedRun run(o, "tune", params);
  run.tag("dataset_fingerprint", raw.fingerprint);
  const auto result = grid_search(train.X, train.y, all.feature_names, learner_from(o), grid, stages_from(o), o.folds,
                                  o.seed, o.workers);
  for (std::size_t i = 0; i < result.table.size(); ++i)
    run.metric("cv_rmse", result.table[i].mean_rmse, static_cast<std::int64_t>(i));
  run.metric("best_cv_rmse", result.table[result.best_index].mean_rmse);
  run.artifact("grid.json", to_json(result).dump(2));
  run.artifact("grid.csv", grid_csv(result));
  if (!o.out.empty()) write_text(o.out, to_json(result).dump(2));
  run.finish();
  print({{"run_id", run.id()},
         {"best_params", result.best_params},
         {"best_cv_rmse", result.table[result.best_index].mean_rmse},
         {"configs", result.table.size()}});
  return kOk;
}

int cmd_evaluate(const Options& o) {
  const auto bundle = load_bundle_opt(o);
  const auto raw = load_data(o);
  auto params = common_params(o);
  params["bundle"] = o.bundle;
  TrackedRun run(o, "evaluate", params);
  run.tag("dataset_fingerprint", raw.fingerprint);
  nlohmann::json out = {{"bundle_run_id", bundle.meta.run_id}};
  if (raw.fingerprint == bundle.meta.dataset_fingerprint) {
    const auto replay = replay_split(bundle, raw);
    run.metrics("train_", replay.train.metrics);
    run.metrics("test_", replay.test.metrics);
    run.metrics("", replay.test.metrics);
    out["train"] = to_json(replay.train.metrics);
    out["test"] = to_json(replay.test.metrics);
    out["matches_training_run"] = bundle.meta.metrics.at("test") == replay.test.metrics;
  } else {
    const auto rep = evaluate_bundle(bundle, raw);
    run.metrics("", rep.metrics);
    out["all"] = to_json(rep);
  }
  run.finish();
  out["run_id"] = run.id();
  print(out);
  return kOk;
}

int cmd_external_validate(const Options& o) {
  const auto bundle = load_bundle_opt(o);
  const auto raw = load_data(o);
  auto params = common_params(o);
  params["bundle"] = o.bundle;
  TrackedRun run(o, "external-validate", params);
  run.tag("dataset_fingerprint", raw.fingerprint);
  const auto rep = evaluate_bundle(bundle, raw, "external");
  run.metrics("", rep.metrics);
  run.artifact("external_report.json", to_json(rep).dump(2));
  run.artifact("residuals.csv", residuals_csv(rep));
  run.finish();
  auto j = to_json(rep);
  j["run_id"] = run.id();
  print(j);
  return kOk;
}

int cmd_loco(const Options& o) {
  const auto raw = load_data(o);
  const auto ds = impute_within_species(raw);
  const auto data = encode_features(ds);
  TrackedRun run(o, "loco", model_params(o));
  run.tag("dataset_fingerprint", raw.fingerprint);
  const auto rep = loco_cv(data, learner_from(o), stages_from(o), o.seed, o.workers);
  for (std::size_t f = 0; f < rep.folds.size(); ++f) {
    run.metric("fold_rmse", rep.folds[f].metrics.rmse, static_cast<std::int64_t>(f));
    if (rep.folds[f].metrics.r2) run.metric("fold_r2", *rep.folds[f].metrics.r2, static_cast<std::int64_t>(f));
  }
  run.metrics("", rep.overall);
  run.artifact("loco.json", to_json(rep).dump(2));
  run.finish();
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
  auto j = to_json(rep);
  j["run_id"] = run.id();
  print(j);
  return kOk;
}

int cmd_explain(const Options& o) {
  const auto bundle = load_bundle_opt(o);
  const auto raw = load_data(o);
  const auto ds = apply_imputation(bundle.imputation, raw);
  auto data = encode_features(ds);
  if (o.rows > 0 && o.rows < data.size()) {
    std::vector<std::size_t> idx(o.rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    data = data.subset(idx);
  }
  auto params = common_params(o);
  params["bundle"] = o.bundle;
  TrackedRun run(o, "explain", params);
  run.tag("dataset_fingerprint", raw.fingerprint);

  const auto& l = bundle.learner;
  const auto shap = tree_shap(l.model, l.pipeline.apply(data.X), l.pipeline.apply(bundle.background), o.workers);
  std::vector<double> mean_abs(shap.values.cols(), 0.0);
  double worst = 0.0;
  for (std::size_t r = 0; r < shap.values.rows(); ++r) {
    double sum = shap.base_value;
    for (std::size_t j = 0; j < shap.values.cols(); ++j) {
      mean_abs[j] += std::abs(shap.values(r, j)) / static_cast<double>(shap.values.rows());
      sum += shap.values(r, j);
    }
    worst = std::max(worst, std::abs(sum - shap.predictions[r]));
  }
  const auto importance = permutation_importance([&](const Matrix& X) { return l.predict(X); }, data.X, data.y,
                                                 data.feature_names, 5, derive_seed(o.seed, "explain"), o.workers);
  nlohmann::json summary = nlohmann::json::object();
  for (std::size_t j = 0; j < mean_abs.size(); ++j) summary[l.pipeline.feature_names_out[j]] = mean_abs[j];
  run.metric("max_additivity_error", worst);
  run.artifact("shap.json", to_json(shap, l.pipeline.feature_names_out).dump());
  run.artifact("importance.json", to_json(importance).dump(2));
  run.finish();
  nlohmann::json out = {{"run_id", run.id()},
                        {"base_value", shap.base_value},
                        {"background_mean", shap.background_mean},
                        {"mean_abs_shap", summary},
                        {"max_additivity_error", worst},
                        {"permutation_importance", to_json(importance)}};
  if (!o.out.empty()) write_text(o.out, to_json(shap, l.pipeline.feature_names_out).dump(2));
  print(out);
  return kOk;
}

int cmd_pdp(const Options& o) {
  const auto bundle = load_bundle_opt(o);
  std::vector<std::string> axes{o.x};
  if (!o.y.empty()) axes.push_back(o.y);
  for (const auto& a : axes)
    if (!encoded_index(a)) throw ConfigError("unknown PDP axis '" + a + "'");
  auto params = common_params(o);
  params["bundle"] = o.bundle;
  params["x"] = o.x;
  params["y"] = o.y;
  params["res"] = std::to_string(o.res);
  TrackedRun run(o, "pdp", params);
  const auto grid = partial_dependence(bundle.learner, bundle.background, axes, o.res, o.workers);
  const auto [i, j] = argmax(grid);
  run.metric("argmax_" + o.x, grid.axes[0].ticks[i]);
  if (grid.axes.size() == 2) run.metric("argmax_" + o.y, grid.axes[1].ticks[j]);
  run.artifact("pdp.json", to_json(grid).dump(2));
  run.artifact("pdp.csv", pdp_csv(grid));
  if (!o.out.empty()) {
    write_text(o.out, to_json(grid).dump(2));
    write_text(fs::path(o.out).replace_extension(".csv"), pdp_csv(grid));
  }
  run.finish();
  auto out = to_json(grid);
  out["run_id"] = run.id();
  print(out);
  return kOk;
}

int cmd_runs(const Options& o) {
  const RunStore store(store_root(o));
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : store.query_runs(o.experiment, o.filter)) arr.push_back(summary_json(r));
  print(arr);
  return kOk;
}

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
  HormeticSpec spec;
  spec.n = o.n;
  const auto ds = make_hormetic_dataset(o.seed, spec);
  write_text(o.out, to_csv(ds));
  std::cout << "wrote " << ds.size() << " rows to " << o.out << '\n';
  return kOk;
}

// Signal handlers only set flags; the watcher thread acts on them.
volatile std::sig_atomic_t g_reload = 0;
volatile std::sig_atomic_t g_stop = 0;

extern "C" void on_sighup(int) { g_reload = 1; }
extern "C" void on_stop(int) { g_stop = 1; }

int cmd_serve(const Options& o) {
  std::shared_ptr<const ServingBundle> bundle;
  if (!o.bundle.empty()) bundle = std::make_shared<const ServingBundle>(load_bundle(o.bundle));
  PredictionService service(bundle, store_root(o));
  httplib::Server server;
  register_routes(server, service);
  std::signal(SIGHUP, on_sighup);
  std::signal(SIGINT, on_stop);
  std::signal(SIGTERM, on_stop);

  std::atomic<bool> running{true};
  std::thread watcher([&] {
    while (running) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      if (g_stop) {
        server.stop();
        break;
      }
      if (!g_reload || o.bundle.empty()) continue;
      g_reload = 0;
      try {
        service.swap_bundle(std::make_shared<const ServingBundle>(load_bundle(o.bundle)));
        std::cerr << "reloaded bundle " << o.bundle << '\n';
      } catch (const std::exception& e) {
        std::cerr << "reload failed, keeping the current bundle: " << e.what() << '\n';
      }
    }
  });
  std::cerr << "listening on " << o.host << ':' << o.port << (bundle ? "" : " (no bundle loaded)") << '\n';
  const bool ok = server.listen(o.host, o.port);
  running = false;
  watcher.join();
  if (!ok && !g_stop) throw ConfigError("cannot listen on " + o.host + ":" + std::to_string(o.port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Cold-plasma germination uplift toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "Flat JSON config file (flags override it)");
  app.add_option("--store", o.store, "Run store root (default: $UPLIFT_STORE or ./mlruns)");
  app.add_option("--experiment", o.experiment, "Experiment name for the tracked run");
  app.add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto data_opt = [&](CLI::App* c) {
    c->add_option("--data", o.data, "Input CSV");
    c->add_option("--schema", o.schema, "Column alias file");
  };
  auto model_opts = [&](CLI::App* c) {
    c->add_option("--model", o.model, "mean, et, gb, xgb or hm1..hm4");
    c->add_option("--seed", o.seed, "Master seed");
    c->add_option("--split", o.split, "Training fraction");
    c->add_flag("--stratify", o.stratify, "Stratify the split by species");
    c->add_flag("--no-preprocess", o.no_preprocess, "Skip Yeo-Johnson, polynomial terms and scaling");
    c->add_option("--param", o.params, "Hyperparameter override key=value (repeatable)");
  };

  auto* ingest = app.add_subcommand("ingest", "Validate, impute and describe a dataset");
  data_opt(ingest);
  ingest->add_option("--out", o.out, "Write the imputed CSV here");

  auto* train = app.add_subcommand("train", "Fit a model and write a serving bundle");
  data_opt(train);
  model_opts(train);
  train->add_flag("--reduced-features", o.reduced_features, "Permutation importance, 95% prefix, refit");
  train->add_option("--out", o.out, "Bundle path");

  auto* tune = app.add_subcommand("tune", "Grid search by k-fold CV on the training partition");
  data_opt(tune);
  model_opts(tune);
  tune->add_option("--grid", o.grid, "Grid JSON: {\"param\": [values...]}");
  tune->add_option("--folds", o.folds, "CV folds")->check(CLI::Range(2, 100));
  tune->add_option("--out", o.out, "Write the grid report here");

  auto* evaluate = app.add_subcommand("evaluate", "Score a bundle (replays the split on its training data)");
  data_opt(evaluate);
  evaluate->add_option("--bundle", o.bundle, "Bundle path");

  auto* loco = app.add_subcommand("loco", "Leave-one-cultivar-out evaluation");
  data_opt(loco);
  model_opts(loco);

  auto* external = app.add_subcommand("external-validate", "Score a bundle on an independent dataset");
  data_opt(external);
  external->add_option("--bundle", o.bundle, "Bundle path");

  auto* explain = app.add_subcommand("explain", "SHAP attributions and permutation importance");
  data_opt(explain);
  explain->add_option("--bundle", o.bundle, "Bundle path");
  explain->add_option("--rows", o.rows, "Explain only the first N rows");
  explain->add_option("--seed", o.seed, "Seed for permutation importance");
  explain->add_option("--out", o.out, "Write the SHAP matrix here");

  auto* pdp = app.add_subcommand("pdp", "Partial dependence over one or two raw features");
  pdp->add_option("--bundle", o.bundle, "Bundle path");
  pdp->add_option("--x", o.x, "First axis feature");
  pdp->add_option("--y", o.y, "Second axis feature (empty for 1-D)");
  pdp->add_option("--res", o.res, "Grid points per axis")->check(CLI::Range(2, 200));
  pdp->add_option("--out", o.out, "Write JSON here (CSV alongside)");

  auto* runs = app.add_subcommand("runs", "List tracked runs");
  runs->add_option("--filter", o.filter, "e.g. \"rmse < 4 and params.model = et\"");

  auto* serve = app.add_subcommand("serve", "HTTP prediction service");
  serve->add_option("--bundle", o.bundle, "Bundle path (SIGHUP reloads it)");
  serve->add_option("--host", o.host, "Bind address");
  serve->add_option("--port", o.port, "Port");

  auto* synth = app.add_subcommand("synth", "Write the synthetic hormetic benchmark dataset");
  synth->add_option("--n", o.n, "Rows")->check(CLI::Range(10, 1000000));
  synth->add_option("--seed", o.seed, "Seed");
  synth->add_option("--out", o.out, "CSV path");

  try {
    if (const auto cfg = find_config_arg(argc, argv)) apply_config(*cfg, o);
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  }

  try {
    if (*ingest) return cmd_ingest(o);
    if (*train) return cmd_train(o);
    if (*tune) return cmd_tune(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*loco) return cmd_loco(o);
    if (*external) return cmd_external_validate(o);
    if (*explain) return cmd_explain(o);
    if (*pdp) return cmd_pdp(o);
    if (*runs) return cmd_runs(o);
    if (*serve) return cmd_serve(o);
    if (*synth) return cmd_synth(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const FilterParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModel;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kInternal;
}
