#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uplift/ensemble.hpp"
#include "uplift/models.hpp"
#include "uplift/preprocess.hpp"

namespace uplift {

// A named model recipe: one of the single families ("mean", "et", "gb",
// "xgb") or a stacked hybrid ("hm1".."hm4") over several base configs.
struct LearnerConfig {
  std::string name = "et";
  std::vector<ModelConfig> models{ExtraTreesParams{}};

  bool stacked() const noexcept { return name.size() == 3 && name.rfind("hm", 0) == 0; }

  static LearnerConfig from_name(const std::string& name) {
    if (name.rfind("hm", 0) == 0) return {name, hybrid_bases(name)};
    return {name, {default_config(name)}};
  }

  /// Single-family config with hyperparameter overrides.
  LearnerConfig with(const ParamMap& overrides) const {
    if (stacked()) throw ConfigError("hyperparameter overrides apply to single-family models only");
    return {name, {with_params(models.front(), overrides)}};
  }

  friend bool operator==(const LearnerConfig&, const LearnerConfig&) = default;
};

using TrainedModel = std::variant<Regressor, StackingModel>;

inline TrainedModel fit_trained_model(const LearnerConfig& config, const Matrix& X, std::span<const double> y,
                                      std::uint64_t seed, const FitOptions& options = {}) {
  if (config.models.empty()) throw ConfigError("learner has no model configs");
  if (config.stacked()) return fit_stacking(X, y, config.models, seed, options);
  return fit_model(config.models.front(), X, y, seed, options);
}

inline double predict_one(const TrainedModel& m, std::span<const double> x) {
  if (const auto* r = std::get_if<Regressor>(&m)) return predict_one(*r, x);
  return std::get<StackingModel>(m).predict(x);
}

inline std::vector<double> predict(const TrainedModel& m, const Matrix& X) {
  if (const auto* r = std::get_if<Regressor>(&m)) return predict(*r, X);
  return std::get<StackingModel>(m).predict(X);
}

/// Preprocessing plus model, fitted together on one training partition.
struct FittedLearner {
  LearnerConfig config;
  FittedPipeline pipeline;
  TrainedModel model;

  std::vector<double> predict(const Matrix& X_raw) const { return uplift::predict(model, pipeline.apply(X_raw)); }
  double predict_one(std::span<const double> x_raw) const {
    const auto x = pipeline.apply_row(x_raw);
    return uplift::predict_one(model, x);
  }
};

inline FittedLearner fit_learner(const Matrix& X_raw, std::span<const double> y, const std::vector<std::string>& names,
                                 const LearnerConfig& config, const PipelineStages& stages, std::uint64_t seed,
                                 const FitOptions& options = {}) {
  FittedLearner out;
  out.config = config;
  out.pipeline = fit_pipeline(X_raw, names, stages);
  out.model = fit_trained_model(config, out.pipeline.apply(X_raw), y, seed, options);
  return out;
}

}  // namespace uplift
