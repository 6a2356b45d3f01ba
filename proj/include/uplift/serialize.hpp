#pragma once

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uplift/data_model.hpp"
#include "uplift/evaluate.hpp"
#include "uplift/interpret.hpp"
#include "uplift/learner.hpp"
#include "uplift/shap.hpp"

namespace uplift {

using json = nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

// Every reader below throws ModelError on malformed input; nlohmann's own
// exceptions never escape.
template <class F>
auto guarded_read(const char* what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelError(std::string("malformed ") + what + ": " + e.what());
  }
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

// ---------------------------------------------------------------- matrix ---

inline json to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const json& j) {
  return guarded_read("matrix", [&] {
    const auto rows = j.at("rows").get<std::size_t>(), cols = j.at("cols").get<std::size_t>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw ModelError("matrix data length does not match its shape");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data().begin());
    return m;
  });
}

// -------------------------------------------------------------- pipeline ---

inline json to_json(const FittedPipeline& p) {
  return {{"version", FittedPipeline::kVersion},
          {"fitted", p.fitted},
          {"stages", {{"yeo_johnson", p.stages.yeo_johnson}, {"polynomial", p.stages.polynomial},
                      {"standardize", p.stages.standardize}}},
          {"feature_names_in", p.feature_names_in},
          {"lambdas", p.lambdas},
          {"poly_base", p.poly_base},
          {"means", p.means},
          {"stds", p.stds},
          {"selected", p.selected},
          {"feature_names_out", p.feature_names_out},
          {"degenerate_columns", p.degenerate_columns}};
}

inline FittedPipeline pipeline_from_json(const json& j) {
  return guarded_read("pipeline", [&] {
    if (j.at("version").get<int>() != FittedPipeline::kVersion)
      throw ModelError("unsupported pipeline version " + j.at("version").dump());
    FittedPipeline p;
    p.fitted = j.at("fitted").get<bool>();
    const auto& s = j.at("stages");
    p.stages = {s.at("yeo_johnson").get<bool>(), s.at("polynomial").get<bool>(), s.at("standardize").get<bool>()};
    p.feature_names_in = j.at("feature_names_in").get<std::vector<std::string>>();
    p.lambdas = j.at("lambdas").get<std::vector<double>>();
    p.poly_base = j.at("poly_base").get<std::array<std::size_t, 3>>();
    p.means = j.at("means").get<std::vector<double>>();
    p.stds = j.at("stds").get<std::vector<double>>();
    p.selected = j.at("selected").get<std::vector<std::size_t>>();
    p.feature_names_out = j.at("feature_names_out").get<std::vector<std::string>>();
    p.degenerate_columns = j.at("degenerate_columns").get<std::size_t>();
    const std::size_t expanded = p.expanded_names().size();
    if (p.lambdas.size() != p.width_in()) throw ModelError("pipeline lambdas do not match its input width");
    if (p.stages.standardize && (p.means.size() != expanded || p.stds.size() != expanded))
      throw ModelError("pipeline moments do not match its expanded width");
    for (auto c : p.selected)
      if (c >= expanded) throw ModelError("pipeline selection out of range");
    return p;
  });
}

// ------------------------------------------------------------------ trees ---

// Columnar node arrays, one list per field.
inline json to_json(const RegressionTree& t) {
  json j = {{"feature", json::array()}, {"threshold", json::array()}, {"left", json::array()},
            {"right", json::array()},   {"value", json::array()},     {"cover", json::array()}};
  for (const auto& n : t.nodes()) {
    j["feature"].push_back(n.feature);
    j["threshold"].push_back(n.threshold);
    j["left"].push_back(n.left);
    j["right"].push_back(n.right);
    j["value"].push_back(n.value);
    j["cover"].push_back(n.cover);
  }
  return j;
}

inline RegressionTree tree_from_json(const json& j, std::size_t n_features) {
  return guarded_read("tree", [&] {
    const auto f = j.at("feature").get<std::vector<std::int32_t>>();
    const auto th = j.at("threshold").get<std::vector<double>>();
    const auto l = j.at("left").get<std::vector<std::int32_t>>();
    const auto r = j.at("right").get<std::vector<std::int32_t>>();
    const auto v = j.at("value").get<std::vector<double>>();
    const auto c = j.at("cover").get<std::vector<double>>();
    const std::size_t n = f.size();
    if (th.size() != n || l.size() != n || r.size() != n || v.size() != n || c.size() != n)
      throw ModelError("tree node arrays differ in length");
    std::vector<TreeNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) nodes[i] = {f[i], th[i], l[i], r[i], v[i], c[i]};
    RegressionTree t(std::move(nodes));
    t.validate(n_features);
    return t;
  });
}

inline json trees_to_json(const std::vector<RegressionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(to_json(t));
  return arr;
}

inline std::vector<RegressionTree> trees_from_json(const json& j, std::size_t n_features) {
  std::vector<RegressionTree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t, n_features));
  return out;
}

// ----------------------------------------------------------------- models ---

inline json to_json(const ModelConfig& c) { return {{"family", family_name(c)}, {"params", to_params(c)}}; }

inline ModelConfig config_from_json(const json& j) {
  return guarded_read("model config", [&] {
    return with_params(default_config(j.at("family").get<std::string>()), j.at("params").get<ParamMap>());
  });
}

inline json to_json(const Regressor& m) {
  return std::visit(
      [](const auto& model) -> json {
        using M = std::decay_t<decltype(model)>;
        json j = {{"n_features", model.n_features}};
        if constexpr (std::is_same_v<M, MeanModel>) {
          j["config"] = to_json(ModelConfig{MeanParams{}});
          j["value"] = model.value;
        } else if constexpr (std::is_same_v<M, ExtraTreesModel>) {
          j["config"] = to_json(ModelConfig{model.params});
          j["seed"] = model.seed;
          j["trees"] = trees_to_json(model.trees);
        } else {
          j["config"] = to_json(ModelConfig{model.params});
          j["seed"] = model.seed;
          j["base_prediction"] = model.base_prediction;
          j["stages"] = trees_to_json(model.stages);
        }
        return j;
      },
      m);
}

inline Regressor regressor_from_json(const json& j) {
  return guarded_read("model", [&]() -> Regressor {
    const auto config = config_from_json(j.at("config"));
    const auto p = j.at("n_features").get<std::size_t>();
    return std::visit(
        [&](const auto& params) -> Regressor {
          using P = std::decay_t<decltype(params)>;
          if constexpr (std::is_same_v<P, MeanParams>) {
            return MeanModel{j.at("value").get<double>(), p};
          } else if constexpr (std::is_same_v<P, ExtraTreesParams>) {
            ExtraTreesModel m{params, j.at("seed").get<std::uint64_t>(), p, trees_from_json(j.at("trees"), p)};
            if (m.trees.empty()) throw ModelError("extra-trees model has no trees");
            return m;
          } else {
            return BoostedModel<P>{params, j.at("seed").get<std::uint64_t>(), p,
                                   j.at("base_prediction").get<double>(), trees_from_json(j.at("stages"), p)};
          }
        },
        config);
  });
}

inline json to_json(const RidgeModel& m) {
  return {{"weights", m.weights}, {"intercept", m.intercept}, {"alpha", m.alpha}};
}

inline json to_json(const StackingModel& s) {
  json configs = json::array(), bases = json::array();
  for (const auto& c : s.base_configs) configs.push_back(to_json(c));
  for (const auto& b : s.bases) bases.push_back(to_json(b));
  return {{"base_configs", configs}, {"bases", bases},          {"meta", to_json(s.meta)},
          {"oof", to_json(s.oof)},   {"fold_of_row", s.fold_of_row}, {"alpha_grid", s.alpha_grid},
          {"seed", s.seed},          {"n_features", s.n_features}};
}

inline StackingModel stacking_from_json(const json& j) {
  return guarded_read("stacking model", [&] {
    StackingModel s;
    for (const auto& c : j.at("base_configs")) s.base_configs.push_back(config_from_json(c));
    for (const auto& b : j.at("bases")) s.bases.push_back(regressor_from_json(b));
    const auto& m = j.at("meta");
    s.meta = {m.at("weights").get<std::vector<double>>(), m.at("intercept").get<double>(), m.at("alpha").get<double>()};
    s.oof = matrix_from_json(j.at("oof"));
    s.fold_of_row = j.at("fold_of_row").get<std::vector<std::size_t>>();
    s.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.n_features = j.at("n_features").get<std::size_t>();
    if (s.meta.weights.size() != s.bases.size()) throw ModelError("meta-learner weights do not match base count");
    return s;
  });
}

inline json to_json(const TrainedModel& m) {
  if (const auto* r = std::get_if<Regressor>(&m)) return {{"kind", "single"}, {"model", to_json(*r)}};
  return {{"kind", "stacking"}, {"model", to_json(std::get<StackingModel>(m))}};
}

inline TrainedModel trained_model_from_json(const json& j) {
  return guarded_read("trained model", [&]() -> TrainedModel {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "single") return regressor_from_json(j.at("model"));
    if (kind == "stacking") return stacking_from_json(j.at("model"));
    throw ModelError("unknown model kind '" + kind + "'");
  });
}

inline json to_json(const LearnerConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back(to_json(m));
  return {{"name", c.name}, {"models", models}};
}

inline LearnerConfig learner_config_from_json(const json& j) {
  return guarded_read("learner config", [&] {
    LearnerConfig c;
    c.name = j.at("name").get<std::string>();
    c.models.clear();
    for (const auto& m : j.at("models")) c.models.push_back(config_from_json(m));
    return c;
  });
}

inline json to_json(const FittedLearner& l) {
  return {{"version", kModelFormatVersion},
          {"config", to_json(l.config)},
          {"pipeline", to_json(l.pipeline)},
          {"model", to_json(l.model)}};
}

inline FittedLearner learner_from_json(const json& j) {
  return guarded_read("fitted learner", [&] {
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ModelError("unsupported model format version " + j.at("version").dump());
    FittedLearner l;
    l.config = learner_config_from_json(j.at("config"));
    l.pipeline = pipeline_from_json(j.at("pipeline"));
    l.model = trained_model_from_json(j.at("model"));
    const std::size_t want = std::visit(
        [](const auto& m) {
          if constexpr (std::is_same_v<std::decay_t<decltype(m)>, Regressor>) return n_features(m);
          else return m.n_features;
        },
        l.model);
    if (want != l.pipeline.width_out()) throw ModelError("pipeline output width does not match the model");
    return l;
  });
}

// ------------------------------------------------------------- imputation ---

inline json to_json(const ImputationTable& t) {
  json species = json::object();
  for (const auto& [name, cells] : t.species_means) {
    json row = json::object();
    for (std::size_t c = 0; c < kNumericCount; ++c) row[std::string(kNumericNames[c])] = cells[c] ? json(*cells[c]) : json(nullptr);
    species[name] = row;
  }
  json global = json::object();
  for (std::size_t c = 0; c < kNumericCount; ++c) global[std::string(kNumericNames[c])] = t.global_means[c];
  return {{"species_means", species}, {"global_means", global}};
}

inline ImputationTable imputation_from_json(const json& j) {
  return guarded_read("imputation table", [&] {
    ImputationTable t;
    for (std::size_t c = 0; c < kNumericCount; ++c)
      t.global_means[c] = j.at("global_means").at(std::string(kNumericNames[c])).get<double>();
    for (const auto& [name, row] : j.at("species_means").items()) {
      auto& cells = t.species_means[name];
      for (std::size_t c = 0; c < kNumericCount; ++c) {
        const auto& v = row.at(std::string(kNumericNames[c]));
        if (!v.is_null()) cells[c] = v.get<double>();
      }
    }
    return t;
  });
}

// ---------------------------------------------------------------- reports ---

inline json to_json(const Metrics& m) {
  return {{"rmse", m.rmse}, {"mae", m.mae}, {"r2", optional_json(m.r2)}, {"n", m.n}};
}

inline json to_json(const std::map<std::string, Metrics>& groups) {
  json j = json::object();
  for (const auto& [k, m] : groups) j[k] = to_json(m);
  return j;
}

inline json to_json(const EvalReport& r) {
  return {{"label", r.label},
          {"metrics", to_json(r.metrics)},
          {"per_species", to_json(r.per_species)},
          {"per_cultivar", to_json(r.per_cultivar)}};
}

inline json to_json(const CvReport& r) {
  json folds = json::array();
  for (const auto& m : r.fold_metrics) folds.push_back(to_json(m));
  return {{"k", r.folds.size()}, {"folds", folds}, {"pooled", to_json(r.pooled)}, {"mean_rmse", r.mean_rmse()}};
}

inline json to_json(const GridResult& g) {
  json rows = json::array();
  for (const auto& row : g.table)
    rows.push_back({{"params", row.params}, {"fold_rmse", row.fold_rmse}, {"mean_rmse", row.mean_rmse}});
  return {{"best_index", g.best_index}, {"best_params", g.best_params}, {"best", to_json(g.best)}, {"table", rows}};
}

inline json to_json(const LocoReport& r) {
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"cultivar", f.cultivar}, {"n_train", f.train_rows.size()}, {"n_test", f.test_rows.size()},
                     {"metrics", to_json(f.metrics)}});
  return {{"folds", folds}, {"overall", to_json(r.overall)}, {"warnings", r.warnings}};
}

inline json to_json(const ImportanceReport& r) {
  return {{"features", r.features}, {"baseline_rmse", r.baseline_rmse}, {"repeats", r.repeats},
          {"raw", r.raw},           {"mean", r.mean},                   {"order", r.order},
          {"shares", r.shares},     {"cumulative", r.cumulative}};
}

inline json to_json(const ShapMatrix& s, const std::vector<std::string>& features) {
  json rows = json::array();
  for (std::size_t r = 0; r < s.values.rows(); ++r) {
    const auto v = s.values.row(r);
    rows.push_back(std::vector<double>(v.begin(), v.end()));
  }
  return {{"features", features},
          {"base_value", s.base_value},
          {"background_mean", s.background_mean},
          {"predictions", s.predictions},
          {"values", rows}};
}

inline json to_json(const PDPGrid& g) {
  json axes = json::array();
  for (const auto& a : g.axes) axes.push_back({{"feature", a.feature}, {"ticks", a.ticks}});
  json values = json::array();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < g.cols(); ++j) row.push_back(g.at(i, j));
    values.push_back(row);
  }
  return {{"axes", axes}, {"values", values}};
}

inline json to_json(const BinnedSurface& s) {
  json mean = json::array(), counts = json::array();
  for (std::size_t i = 0; i < s.rows(); ++i) {
    json mrow = json::array(), crow = json::array();
    for (std::size_t j = 0; j < s.cols(); ++j) {
      mrow.push_back(optional_json(s.at(i, j)));
      crow.push_back(s.counts[i * s.cols() + j]);
    }
    mean.push_back(mrow);
    counts.push_back(crow);
  }
  json j = {{"row_edges", s.row_edges}, {"col_edges", s.col_edges}, {"mean", mean},
            {"counts", counts},         {"out_of_range", s.out_of_range}};
  if (const auto best = s.argmax()) j["argmax"] = {best->first, best->second};
  else j["argmax"] = nullptr;
  return j;
}

inline json to_json(const RankedModel& m) {
  return {{"name", m.name}, {"rank", m.rank}, {"metrics", to_json(m.metrics)}};
}

// -------------------------------------------------------------------- CSV ---

inline std::string grid_csv(const GridResult& g) {
  std::ostringstream out;
  std::vector<std::string> keys;
  if (!g.table.empty())
    for (const auto& [k, v] : g.table.front().params) keys.push_back(k);
  for (const auto& k : keys) out << k << ',';
  out << "mean_rmse\n";
  for (const auto& row : g.table) {
    for (const auto& k : keys) out << format_number(row.params.at(k)) << ',';
    out << format_number(row.mean_rmse) << '\n';
  }
  return out.str();
}

// Long format: one line per grid cell.
inline std::string pdp_csv(const PDPGrid& g) {
  std::ostringstream out;
  out << g.axes[0].feature;
  if (g.axes.size() == 2) out << ',' << g.axes[1].feature;
  out << ",prediction\n";
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) {
      out << format_number(g.axes[0].ticks[i]);
      if (g.axes.size() == 2) out << ',' << format_number(g.axes[1].ticks[j]);
      out << ',' << format_number(g.at(i, j)) << '\n';
    }
  return out.str();
}

inline std::string residuals_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "truth,prediction,residual\n";
  for (const auto& [y, p] : r.residuals)
    out << format_number(y) << ',' << format_number(p) << ',' << format_number(y - p) << '\n';
  return out.str();
}

// ------------------------------------------------------------------- grid ---

/// Parses {"param": [v1, v2, ...], ...}; axes keep their order in the text.
inline GridSpec grid_from_text(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("grid file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("grid file must be a JSON object of value lists");
  GridSpec g;
  for (const auto& [key, values] : doc.items()) {
    if (!values.is_array() || values.empty()) throw ConfigError("grid axis '" + key + "' must be a non-empty list");
    std::vector<double> v;
    for (const auto& x : values) {
      if (!x.is_number()) throw ConfigError("grid axis '" + key + "' must hold numbers");
      v.push_back(x.get<double>());
    }
    g.axes.emplace_back(key, std::move(v));
  }
  return g;
}

}  // namespace uplift
