#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uplift/bundle.hpp"
#include "uplift/interpret.hpp"
#include "uplift/shap.hpp"
#include "uplift/tracking.hpp"

namespace uplift {

struct Response {
  int status = 200;
  json body;
};

inline Response error_response(int status, std::string message, std::optional<std::string> key = std::nullopt) {
  json body = {{"error", std::move(message)}};
  if (key) body["key"] = *key;
  return {status, body};
}

// Fields /predict requires; every other numeric trait may be omitted and
// is then filled from the bundle's species means.
inline const std::vector<std::string>& required_request_fields() {
  static const std::vector<std::string> f = {"species", "gas_type", "voltage_kv", "power_w", "plasma_time_s"};
  return f;
}

struct RequestRow {
  std::vector<double> raw;  // encoded, pipeline input order
  std::vector<std::string> imputed;
};

class RequestError : public std::runtime_error {
 public:
  RequestError(std::string key, const std::string& message) : std::runtime_error(message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline bool is_percentage_column(Numeric c) {
  return c == Numeric::baseline_germination_pct || c == Numeric::germination_potential_pct;
}

inline bool is_nonnegative_column(Numeric c) {
  return c == Numeric::plasma_time_s || c == Numeric::power_w || c == Numeric::voltage_kv ||
         c == Numeric::frequency_khz;
}

/// Validates a raw-unit request object and encodes it as one pipeline row.
inline RequestRow parse_request(const json& body, const ImputationTable& imputation) {
  if (!body.is_object()) throw RequestError("", "request body must be a JSON object");
  for (const auto& [key, value] : body.items()) {
    if (key == kSpecies || key == kCultivar || key == kGasType) continue;
    if (!numeric_from_name(key)) throw RequestError(key, "unknown feature '" + key + "'");
  }
  for (const auto& key : required_request_fields())
    if (!body.contains(key)) throw RequestError(key, "missing required field '" + key + "'");

  const auto& sp = body.at(std::string(kSpecies));
  if (!sp.is_string() || sp.get<std::string>().empty())
    throw RequestError(std::string(kSpecies), "species must be a non-empty string");
  const std::string species = sp.get<std::string>();
  if (body.contains(std::string(kCultivar)) && !body.at(std::string(kCultivar)).is_string())
    throw RequestError(std::string(kCultivar), "cultivar must be a string");

  const auto& gas_field = body.at(std::string(kGasType));
  std::optional<GasType> gas;
  if (gas_field.is_string()) gas = parse_gas(gas_field.get<std::string>());
  if (!gas) throw RequestError(std::string(kGasType), "gas_type must be one of Ar, He, O2, air");

  SeedRecord rec;
  rec.species = species;
  rec.gas = *gas;
  RequestRow out;
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    const std::string name(kNumericNames[k]);
    const auto col = static_cast<Numeric>(k);
    if (!body.contains(name)) {
      rec.numeric[k] = imputation.value_for(species, k);
      out.imputed.push_back(name);
      continue;
    }
    const auto& v = body.at(name);
    if (!v.is_number()) throw RequestError(name, "'" + name + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw RequestError(name, "'" + name + "' must be finite");
    if (is_percentage_column(col) && (x < 0.0 || x > 100.0))
      throw RequestError(name, "'" + name + "' must lie in [0, 100]");
    if (is_nonnegative_column(col) && x < 0.0) throw RequestError(name, "'" + name + "' must be non-negative");
    rec.numeric[k] = x;
  }
  out.raw.assign(kEncodedWidth, 0.0);
  encode_record(rec, out.raw);
  return out;
}

inline std::optional<std::string> query_value(const std::map<std::string, std::string>& q, const std::string& k) {
  const auto it = q.find(k);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

// Request handlers independent of any HTTP library. The loaded bundle is
// immutable; reload swaps the pointer under a mutex so in-flight requests
// keep the bundle they started with.
class PredictionService {
 public:
  explicit PredictionService(std::shared_ptr<const ServingBundle> bundle = nullptr,
                             std::optional<std::filesystem::path> store_root = std::nullopt)
      : bundle_(std::move(bundle)), store_root_(std::move(store_root)) {}

  std::shared_ptr<const ServingBundle> bundle() const {
    std::lock_guard lock(mutex_);
    return bundle_;
  }

  void swap_bundle(std::shared_ptr<const ServingBundle> b) {
    if (b) b->validate();
    std::lock_guard lock(mutex_);
    bundle_ = std::move(b);
  }

  Response healthz() const {
    return {200, {{"status", "ok"}, {"bundle_loaded", bundle() != nullptr}}};
  }

  Response model_info() const {
    const auto b = bundle();
    if (!b) return no_bundle();
    json metrics = json::object();
    for (const auto& [k, m] : b->meta.metrics) metrics[k] = to_json(m);
    return {200,
            {{"bundle_version", b->version},
             {"model", to_json(b->learner.config)},
             {"stages", to_json(b->learner.pipeline)["stages"]},
             {"features_in", b->learner.pipeline.feature_names_in},
             {"features_out", b->learner.pipeline.feature_names_out},
             {"required_fields", required_request_fields()},
             {"train_date", b->meta.train_date},
             {"dataset_fingerprint", b->meta.dataset_fingerprint},
             {"seed", b->meta.seed},
             {"split_ratio", b->meta.split_ratio},
             {"reduced_features", b->meta.reduced_features},
             {"run_id", b->meta.run_id},
             {"metrics", metrics}}};
  }

  Response predict(const std::string& body_text) const { return handle_predict(body_text, false); }
  Response explain(const std::string& body_text) const { return handle_predict(body_text, true); }

  Response pdp(const std::map<std::string, std::string>& query) const {
    const auto b = bundle();
    if (!b) return no_bundle();
    const auto x = query_value(query, "x");
    if (!x || x->empty()) return error_response(400, "query parameter 'x' is required", "x");
    std::vector<std::string> axes{*x};
    if (const auto y = query_value(query, "y"); y && !y->empty()) axes.push_back(*y);
    std::size_t res = 20;
    if (const auto r = query_value(query, "res")) {
      char* end = nullptr;
      const long v = std::strtol(r->c_str(), &end, 10);
      if (r->empty() || *end != '\0' || v < 2 || v > 200)
        return error_response(400, "'res' must be an integer in [2, 200]", "res");
      res = static_cast<std::size_t>(v);
    }
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const auto& names = b->feature_names();
      if (std::find(names.begin(), names.end(), axes[i]) == names.end())
        return error_response(400, "unknown feature '" + axes[i] + "'", i == 0 ? "x" : "y");
    }
    if (axes.size() == 2 && axes[0] == axes[1]) return error_response(400, "'x' and 'y' must differ", "y");
    const auto grid = partial_dependence(b->learner, b->background, axes, res);
    auto body = to_json(grid);
    body["bundle_version"] = b->version;
    return {200, body};
  }

  Response runs(const std::map<std::string, std::string>& query) const {
    if (!store_root_) return error_response(503, "no run store configured");
    try {
      const RunStore store(*store_root_);
      json arr = json::array();
      for (const auto& r : store.query_runs(query_value(query, "experiment").value_or(""),
                                            query_value(query, "filter").value_or("")))
        arr.push_back(summary_json(r));
      return {200, {{"runs", arr}}};
    } catch (const FilterParseError& e) {
      return error_response(400, e.what(), "filter");
    } catch (const ConfigError& e) {
      return error_response(400, e.what(), "experiment");
    }
  }

 private:
  static Response no_bundle() { return error_response(503, "no model bundle loaded"); }

  Response handle_predict(const std::string& body_text, bool with_explanation) const {
    const auto b = bundle();
    if (!b) return no_bundle();
    json body;
    try {
      body = json::parse(body_text);
    } catch (const json::parse_error& e) {
      return error_response(400, std::string("invalid JSON: ") + e.what());
    }
    RequestRow row;
    try {
      row = parse_request(body, b->imputation);
    } catch (const RequestError& e) {
      return e.key().empty() ? error_response(400, e.what()) : error_response(400, e.what(), e.key());
    }
    const auto x = b->learner.pipeline.apply_row(row.raw);
    const double prediction = uplift::predict_one(b->learner.model, x);
    json out = {{"uplift_pct", prediction},
                {"bundle_version", b->version},
                {"model", b->learner.config.name},
                {"imputed", row.imputed}};
    if (!with_explanation) return {200, out};

    TreeEnsembleView view;
    try {
      view = tree_view(b->learner.model);
    } catch (const UnsupportedModelError& e) {
      return error_response(422, e.what());
    }
    std::vector<double> phi(x.size(), 0.0);
    for (const auto& [t, w] : view.trees) tree_shap_accumulate(*t, x, phi, w);
    const double base = expected_value(view);
    json attributions = json::object();
    double sum = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) {
      attributions[b->learner.pipeline.feature_names_out[j]] = phi[j];
      sum += phi[j];
    }
    out["base_value"] = base;
    out["attributions"] = attributions;
    out["additivity_error"] = std::abs(base + sum - prediction);
    return {200, out};
  }

  mutable std::mutex mutex_;
  std::shared_ptr<const ServingBundle> bundle_;
  std::optional<std::filesystem::path> store_root_;
};

}  // namespace uplift
