#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/matrix.hpp"
#include "uplift/parallel.hpp"
#include "uplift/rng.hpp"
#include "uplift/tree.hpp"

namespace uplift {

using ParamMap = std::map<std::string, double>;

// Hyperparameter defaults below are the tuned values reported for the
// germination dataset.

struct MeanParams {
  friend bool operator==(const MeanParams&, const MeanParams&) = default;
};

struct ExtraTreesParams {
  std::size_t n_estimators = 400;
  std::size_t min_samples_split = 4;
  std::size_t min_samples_leaf = 2;
  std::size_t max_features = 0;  // 0 = every feature
  std::size_t max_depth = kUnboundedDepth;
  friend bool operator==(const ExtraTreesParams&, const ExtraTreesParams&) = default;
};

struct GradientBoostingParams {
  std::size_t n_estimators = 500;
  double learning_rate = 0.01;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 6;
  std::size_t max_depth = kUnboundedDepth;
  double subsample = 1.0;
  friend bool operator==(const GradientBoostingParams&, const GradientBoostingParams&) = default;
};

struct RegularizedBoostingParams {
  std::size_t n_estimators = 300;
  double learning_rate = 0.05;
  std::size_t max_depth = kUnboundedDepth;
  double subsample = 0.4;
  double colsample_bytree = 1.0;
  double min_child_weight = 2.0;
  double gamma = 5.0;
  double l2_leaf = 1.0;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  friend bool operator==(const RegularizedBoostingParams&, const RegularizedBoostingParams&) = default;
};

using ModelConfig = std::variant<MeanParams, ExtraTreesParams, GradientBoostingParams, RegularizedBoostingParams>;

struct FitOptions {
  std::size_t workers = 1;
  std::vector<std::string>* warnings = nullptr;

  void warn(std::string message) const {
    if (warnings) warnings->push_back(std::move(message));
  }
};

namespace detail {

inline void check_training_data(const Matrix& X, std::span<const double> y, std::size_t min_rows) {
  if (X.rows() == 0) throw DataError("empty training set");
  if (X.rows() < min_rows)
    throw DataError("need at least " + std::to_string(min_rows) + " training rows, got " + std::to_string(X.rows()));
  if (y.size() != X.rows()) throw DataError("target length does not match feature rows");
  for (double v : X.data())
    if (!std::isfinite(v)) throw DataError("feature matrix contains non-finite values");
  for (double v : y)
    if (!std::isfinite(v)) throw DataError("target contains non-finite values");
}

inline void check_width(std::size_t expected, std::size_t got) {
  if (expected != got)
    throw ModelError("model expects " + std::to_string(expected) + " features, got " + std::to_string(got));
}

struct CanonicalData {
  Matrix X;
  std::vector<double> y;
};

inline CanonicalData canonicalize(const Matrix& X, std::span<const double> y) {
  const auto order = canonical_order(X, y);
  return {X.select_rows(order), select(y, order)};
}

}  // namespace detail

struct MeanModel {
  double value = 0.0;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const {
    detail::check_width(n_features, x.size());
    return value;
  }
  friend bool operator==(const MeanModel&, const MeanModel&) = default;
};

/// Averages fully grown randomized trees.
struct ExtraTreesModel {
  ExtraTreesParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const {
    detail::check_width(n_features, x.size());
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
  friend bool operator==(const ExtraTreesModel&, const ExtraTreesModel&) = default;
};

// Shared shape of both boosting variants: base + sum of lr * tree_k(x),
// accumulated in stage order.
template <class Params>
struct BoostedModel {
  Params params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  double base_prediction = 0.0;
  std::vector<RegressionTree> stages;

  double learning_rate() const noexcept { return params.learning_rate; }

  /// Prediction after the first `k` stages.
  double predict_staged(std::span<const double> x, std::size_t k) const {
    detail::check_width(n_features, x.size());
    double p = base_prediction;
    for (std::size_t s = 0; s < k && s < stages.size(); ++s) p += params.learning_rate * stages[s].predict(x);
    return p;
  }
  double predict(std::span<const double> x) const { return predict_staged(x, stages.size()); }

  friend bool operator==(const BoostedModel&, const BoostedModel&) = default;
};

using GradientBoostingModel = BoostedModel<GradientBoostingParams>;
using RegularizedBoostingModel = BoostedModel<RegularizedBoostingParams>;

inline MeanModel fit_mean(const Matrix& X, std::span<const double> y) {
  detail::check_training_data(X, y, 1);
  const double s = std::accumulate(y.begin(), y.end(), 0.0);
  return {s / static_cast<double>(y.size()), X.cols()};
}

inline ExtraTreesModel fit_extra_trees(const Matrix& X, std::span<const double> y, const ExtraTreesParams& params,
                                       std::uint64_t seed, const FitOptions& options = {}) {
  detail::check_training_data(X, y, 1);
  if (params.n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
  ExtraTreesModel model;
  model.params = params;
  model.seed = seed;
  model.n_features = X.cols();
  RandomizedTreeParams tree_params{params.min_samples_split, params.min_samples_leaf, params.max_features,
                                   params.max_depth};
  if (params.max_features > X.cols()) {
    options.warn("max_features " + std::to_string(params.max_features) + " clamped to " + std::to_string(X.cols()));
    tree_params.max_features = X.cols();
  }
  const auto data = detail::canonicalize(X, y);
  model.trees.resize(params.n_estimators);
  parallel_for(params.n_estimators, options.workers, [&](std::size_t t) {
    model.trees[t] = build_randomized_tree(data.X, data.y, tree_params, derive_seed(seed, t));
  });
  return model;
}

namespace detail {

template <class Params>
BoostedModel<Params> fit_boosted(const Matrix& X, std::span<const double> y, const Params& params,
                                 std::uint64_t seed, const GradientTreeParams& tree_params, double subsample,
                                 double colsample) {
  check_training_data(X, y, 2);
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
  if (!(colsample > 0.0 && colsample <= 1.0)) throw ConfigError("colsample_bytree must lie in (0, 1]");
  if (!(params.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  const auto data = canonicalize(X, y);
  const std::size_t n = data.X.rows(), p = data.X.cols();

  BoostedModel<Params> model;
  model.params = params;
  model.seed = seed;
  model.n_features = p;
  model.base_prediction = std::accumulate(data.y.begin(), data.y.end(), 0.0) / static_cast<double>(n);

  std::vector<double> pred(n, model.base_prediction), grad(n);
  std::vector<std::size_t> all_rows(n), all_features(p);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::iota(all_features.begin(), all_features.end(), std::size_t{0});
  const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(subsample * static_cast<double>(n))));
  const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(colsample * static_cast<double>(p))));

  model.stages.reserve(params.n_estimators);
  for (std::size_t stage = 0; stage < params.n_estimators; ++stage) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - data.y[i];
    Rng rng(derive_seed(seed, stage));
    std::vector<std::size_t> rows = all_rows, features = all_features;
    if (n_rows < n) {
      rows = sample_without_replacement(n, n_rows, rng);
      std::sort(rows.begin(), rows.end());
    }
    if (n_cols < p) {
      features = sample_without_replacement(p, n_cols, rng);
      std::sort(features.begin(), features.end());
    }
    auto tree = build_gradient_tree(data.X, grad, rows, features, tree_params);
    for (std::size_t i = 0; i < n; ++i) pred[i] += params.learning_rate * tree.predict(data.X.row(i));
    model.stages.push_back(std::move(tree));
  }
  return model;
}

}  // namespace detail

/// Classic gradient boosting with shrinkage on squared error; each stage is
/// an exhaustive variance-reduction tree fitted to the current residuals.
inline GradientBoostingModel fit_gradient_boosting(const Matrix& X, std::span<const double> y,
                                                   const GradientBoostingParams& params, std::uint64_t seed,
                                                   const FitOptions& options = {}) {
  GradientTreeParams tp;
  tp.min_samples_split = params.min_samples_split;
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.max_depth = params.max_depth;
  tp.workers = options.workers;
  return detail::fit_boosted(X, y, params, seed, tp, params.subsample, 1.0);
}

/// Second-order boosting with gain threshold, L2 leaf penalty, minimum child
/// hessian and per-tree row/column subsampling.
inline RegularizedBoostingModel fit_regularized_boosting(const Matrix& X, std::span<const double> y,
                                                         const RegularizedBoostingParams& params, std::uint64_t seed,
                                                         const FitOptions& options = {}) {
  if (params.l2_leaf < 0.0 || params.gamma < 0.0) throw ConfigError("l2_leaf and gamma must be non-negative");
  GradientTreeParams tp;
  tp.min_samples_split = params.min_samples_split;
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.max_depth = params.max_depth;
  tp.l2_leaf = params.l2_leaf;
  tp.gamma = params.gamma;
  tp.min_child_weight = params.min_child_weight;
  tp.workers = options.workers;
  return detail::fit_boosted(X, y, params, seed, tp, params.subsample, params.colsample_bytree);
}

using Regressor = std::variant<MeanModel, ExtraTreesModel, GradientBoostingModel, RegularizedBoostingModel>;

inline Regressor fit_model(const ModelConfig& config, const Matrix& X, std::span<const double> y,
                           std::uint64_t seed, const FitOptions& options = {}) {
  return std::visit(
      [&](const auto& p) -> Regressor {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MeanParams>) return fit_mean(X, y);
        else if constexpr (std::is_same_v<P, ExtraTreesParams>) return fit_extra_trees(X, y, p, seed, options);
        else if constexpr (std::is_same_v<P, GradientBoostingParams>) return fit_gradient_boosting(X, y, p, seed, options);
        else return fit_regularized_boosting(X, y, p, seed, options);
      },
      config);
}

inline std::size_t n_features(const Regressor& m) {
  return std::visit([](const auto& model) { return model.n_features; }, m);
}

inline double predict_one(const Regressor& m, std::span<const double> x) {
  return std::visit([&](const auto& model) { return model.predict(x); }, m);
}

inline std::vector<double> predict(const Regressor& m, const Matrix& X) {
  detail::check_width(n_features(m), X.cols());
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) out[r] = predict_one(m, X.row(r));
  return out;
}

// ---- configuration <-> flat parameter maps (grid search, tracking, CLI) ----

inline std::string family_name(const ModelConfig& c) {
  switch (c.index()) {
    case 0: return "mean";
    case 1: return "et";
    case 2: return "gb";
    default: return "xgb";
  }
}

inline ModelConfig default_config(const std::string& family) {
  if (family == "mean") return MeanParams{};
  if (family == "et") return ExtraTreesParams{};
  if (family == "gb") return GradientBoostingParams{};
  if (family == "xgb") return RegularizedBoostingParams{};
  throw ConfigError("unknown model family '" + family + "' (expected mean, et, gb or xgb)");
}

namespace detail {

inline std::size_t as_count(const std::string& key, double v) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 2147483647.0)
    throw ConfigError("parameter '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

// max_depth accepts 0 (or negative) as "unbounded".
inline std::size_t as_depth(double v) {
  if (v <= 0.0 || v >= 2147483647.0) return kUnboundedDepth;
  return as_count("max_depth", v);
}

}  // namespace detail

inline ParamMap to_params(const ModelConfig& config) {
  return std::visit(
      [](const auto& p) -> ParamMap {
        using P = std::decay_t<decltype(p)>;
        auto depth = [](std::size_t d) { return d == kUnboundedDepth ? 0.0 : static_cast<double>(d); };
        if constexpr (std::is_same_v<P, MeanParams>) {
          return {};
        } else if constexpr (std::is_same_v<P, ExtraTreesParams>) {
          return {{"n_estimators", double(p.n_estimators)}, {"min_samples_split", double(p.min_samples_split)},
                  {"min_samples_leaf", double(p.min_samples_leaf)}, {"max_features", double(p.max_features)},
                  {"max_depth", depth(p.max_depth)}};
        } else if constexpr (std::is_same_v<P, GradientBoostingParams>) {
          return {{"n_estimators", double(p.n_estimators)}, {"learning_rate", p.learning_rate},
                  {"min_samples_split", double(p.min_samples_split)}, {"min_samples_leaf", double(p.min_samples_leaf)},
                  {"max_depth", depth(p.max_depth)}, {"subsample", p.subsample}};
        } else {
          return {{"n_estimators", double(p.n_estimators)}, {"learning_rate", p.learning_rate},
                  {"max_depth", depth(p.max_depth)}, {"subsample", p.subsample},
                  {"colsample_bytree", p.colsample_bytree}, {"min_child_weight", p.min_child_weight},
                  {"gamma", p.gamma}, {"l2_leaf", p.l2_leaf}, {"min_samples_split", double(p.min_samples_split)},
                  {"min_samples_leaf", double(p.min_samples_leaf)}};
        }
      },
      config);
}

/// Overrides fields of `base` from a parameter map; unknown keys are errors.
inline ModelConfig with_params(ModelConfig base, const ParamMap& overrides) {
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        for (const auto& [key, v] : overrides) {
          bool known = true;
          if constexpr (std::is_same_v<P, MeanParams>) {
            known = false;
          } else {
            if (key == "n_estimators") p.n_estimators = detail::as_count(key, v);
            else if (key == "min_samples_split") p.min_samples_split = detail::as_count(key, v);
            else if (key == "min_samples_leaf") p.min_samples_leaf = detail::as_count(key, v);
            else if (key == "max_depth") p.max_depth = detail::as_depth(v);
            else if constexpr (std::is_same_v<P, ExtraTreesParams>) {
              if (key == "max_features") p.max_features = detail::as_count(key, v);
              else known = false;
            } else if constexpr (std::is_same_v<P, GradientBoostingParams>) {
              if (key == "learning_rate") p.learning_rate = v;
              else if (key == "subsample") p.subsample = v;
              else known = false;
            } else {
              if (key == "learning_rate") p.learning_rate = v;
              else if (key == "subsample") p.subsample = v;
              else if (key == "colsample_bytree") p.colsample_bytree = v;
              else if (key == "min_child_weight") p.min_child_weight = v;
              else if (key == "gamma") p.gamma = v;
              else if (key == "l2_leaf") p.l2_leaf = v;
              else known = false;
            }
          }
          if (!known) throw ConfigError("unknown hyperparameter '" + key + "' for model family");
        }
      },
      base);
  return base;
}

}  // namespace uplift
