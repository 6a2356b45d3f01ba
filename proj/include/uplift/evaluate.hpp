#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "uplift/data_model.hpp"
#include "uplift/ensemble.hpp"
#include "uplift/learner.hpp"
#include "uplift/metrics.hpp"
#include "uplift/parallel.hpp"

namespace uplift {

// ------------------------------------------------------------- reports ---

struct EvalReport {
  std::string label;
  Metrics metrics;
  std::map<std::string, Metrics> per_species;
  std::map<std::string, Metrics> per_cultivar;
  std::vector<std::pair<double, double>> residuals;  // (truth, prediction)
};

inline std::map<std::string, Metrics> group_metrics(std::span<const double> y, std::span<const double> yhat,
                                                    std::span<const std::string> labels) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& g = groups[labels[i]];
    g.first.push_back(y[i]);
    g.second.push_back(yhat[i]);
  }
  std::map<std::string, Metrics> out;
  for (const auto& [name, g] : groups) out[name] = score(g.first, g.second);
  return out;
}

inline EvalReport evaluate_predictions(std::string label, std::span<const double> y, std::span<const double> yhat,
                                       std::span<const std::string> species = {},
                                       std::span<const std::string> cultivar = {}) {
  EvalReport r;
  r.label = std::move(label);
  r.metrics = score(y, yhat);
  if (!species.empty()) r.per_species = group_metrics(y, yhat, species);
  if (!cultivar.empty()) r.per_cultivar = group_metrics(y, yhat, cultivar);
  for (std::size_t i = 0; i < y.size(); ++i) r.residuals.emplace_back(y[i], yhat[i]);
  return r;
}

// ------------------------------------------------------------ k-fold CV ---

struct CvReport {
  std::vector<std::vector<std::size_t>> folds;
  std::vector<Metrics> fold_metrics;
  Metrics pooled;
  std::vector<double> oof_predictions;

  double mean_rmse() const {
    double s = 0.0;
    for (const auto& m : fold_metrics) s += m.rmse;
    return s / static_cast<double>(fold_metrics.size());
  }
};

/// k-fold CV on raw (encoded, unpreprocessed) features: the pipeline and the
/// model are refit inside every fold.
inline CvReport kfold_cv(const Matrix& X_raw, std::span<const double> y, const std::vector<std::string>& names,
                         const LearnerConfig& learner, const PipelineStages& stages, std::size_t k,
                         std::uint64_t seed, std::size_t workers = 1) {
  CvReport rep;
  rep.folds = kfold_indices(X_raw.rows(), k, seed);
  rep.fold_metrics.resize(k);
  rep.oof_predictions.assign(X_raw.rows(), 0.0);
  parallel_for(k, workers, [&](std::size_t f) {
    const auto& val = rep.folds[f];
    const auto train = complement(X_raw.rows(), val);
    const auto fitted = fit_learner(X_raw.select_rows(train), select(y, train), names, learner, stages,
                                    derive_seed(seed, f, 1));
    const auto pred = fitted.predict(X_raw.select_rows(val));
    for (std::size_t i = 0; i < val.size(); ++i) rep.oof_predictions[val[i]] = pred[i];
    rep.fold_metrics[f] = score(select(y, val), pred);
  });
  rep.pooled = score(y, rep.oof_predictions);
  return rep;
}

// ---------------------------------------------------------- grid search ---

// Hyperparameter axes in declared order; the first axis varies slowest.
struct GridSpec {
  std::vector<std::pair<std::string, std::vector<double>>> axes;

  std::vector<ParamMap> expand() const {
    std::vector<ParamMap> out{ParamMap{}};
    for (const auto& [key, values] : axes) {
      if (values.empty()) throw ConfigError("grid axis '" + key + "' has no values");
      std::vector<ParamMap> next;
      for (const auto& partial : out)
        for (double v : values) {
          ParamMap m = partial;
          m[key] = v;
          next.push_back(std::move(m));
        }
      out = std::move(next);
    }
    return out;
  }
};

struct GridRow {
  ParamMap params;
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
};

struct GridResult {
  std::size_t best_index = 0;
  ParamMap best_params;
  LearnerConfig best;
  std::vector<GridRow> table;
};

/// Full Cartesian grid scored by mean CV RMSE over shared folds. Ties keep
/// the earliest config in enumeration order.
inline GridResult grid_search(const Matrix& X_raw, std::span<const double> y, const std::vector<std::string>& names,
                              const LearnerConfig& base, const GridSpec& grid, const PipelineStages& stages,
                              std::size_t k, std::uint64_t seed, std::size_t workers = 1) {
  const auto configs = grid.expand();
  const auto folds = kfold_indices(X_raw.rows(), k, seed);
  std::vector<LearnerConfig> learners;
  for (const auto& p : configs) learners.push_back(base.with(p));

  GridResult result;
  result.table.resize(configs.size());
  for (std::size_t c = 0; c < configs.size(); ++c) {
    result.table[c].params = configs[c];
    result.table[c].fold_rmse.assign(k, 0.0);
  }
  parallel_for(configs.size() * k, workers, [&](std::size_t task) {
    const std::size_t c = task / k, f = task % k;
    const auto train = complement(X_raw.rows(), folds[f]);
    const auto fitted = fit_learner(X_raw.select_rows(train), select(y, train), names, learners[c], stages,
                                    derive_seed(seed, f, 1));
    result.table[c].fold_rmse[f] = rmse(select(y, folds[f]), fitted.predict(X_raw.select_rows(folds[f])));
  });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    auto& row = result.table[c];
    double s = 0.0;
    for (double v : row.fold_rmse) s += v;
    row.mean_rmse = s / static_cast<double>(k);
    if (row.mean_rmse < best) {
      best = row.mean_rmse;
      result.best_index = c;
    }
  }
  result.best_params = configs[result.best_index];
  result.best = learners[result.best_index];
  return result;
}

// ----------------------------------------------------------------- LOCO ---

struct LocoFold {
  std::string cultivar;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  Metrics metrics;
};

struct LocoReport {
  std::vector<LocoFold> folds;
  Metrics overall;  // micro-averaged over all out-of-fold predictions
  std::vector<double> predictions;
  std::vector<std::string> warnings;
};

/// Leave-one-cultivar-out: one fold per cultivar; the pipeline and model are
/// refit on the remaining cultivars. `cultivars` optionally restricts and
/// orders the folds; names with no rows are skipped with a warning.
inline LocoReport loco_cv(const EncodedData& data, const LearnerConfig& learner, const PipelineStages& stages,
                          std::uint64_t seed, std::size_t workers = 1, std::vector<std::string> cultivars = {}) {
  if (data.y.size() != data.size()) throw DataError("LOCO needs a target for every row");
  const std::set<std::string> present(data.cultivar.begin(), data.cultivar.end());
  if (present.size() < 2) throw DataError("LOCO needs at least 2 cultivars");
  if (cultivars.empty()) cultivars.assign(present.begin(), present.end());

  LocoReport rep;
  for (const auto& c : cultivars) {
    if (!present.count(c)) {
      rep.warnings.push_back("cultivar '" + c + "' has no rows; skipped");
      continue;
    }
    LocoFold fold;
    fold.cultivar = c;
    for (std::size_t i = 0; i < data.size(); ++i) (data.cultivar[i] == c ? fold.test_rows : fold.train_rows).push_back(i);
    rep.folds.push_back(std::move(fold));
  }
  std::vector<std::vector<double>> preds(rep.folds.size());
  parallel_for(rep.folds.size(), workers, [&](std::size_t f) {
    auto& fold = rep.folds[f];
    const auto fitted = fit_learner(data.X.select_rows(fold.train_rows), select(data.y, fold.train_rows),
                                    data.feature_names, learner, stages, derive_seed(seed, f, 2));
    preds[f] = fitted.predict(data.X.select_rows(fold.test_rows));
    fold.metrics = score(select(data.y, fold.test_rows), preds[f]);
  });
  std::vector<double> truth;
  for (std::size_t f = 0; f < rep.folds.size(); ++f) {
    const auto yt = select(data.y, rep.folds[f].test_rows);
    truth.insert(truth.end(), yt.begin(), yt.end());
    rep.predictions.insert(rep.predictions.end(), preds[f].begin(), preds[f].end());
  }
  rep.overall = score(truth, rep.predictions);
  return rep;
}

// -------------------------------------------------------------- ranking ---

struct RankedModel {
  std::string name;
  Metrics metrics;
  std::size_t rank = 0;
};

/// Orders by descending R^2, then ascending RMSE, then ascending MAE.
inline std::vector<RankedModel> rank_models(std::vector<RankedModel> models) {
  auto r2v = [](const Metrics& m) { return m.r2.value_or(-std::numeric_limits<double>::infinity()); };
  std::stable_sort(models.begin(), models.end(), [&](const RankedModel& a, const RankedModel& b) {
    if (r2v(a.metrics) != r2v(b.metrics)) return r2v(a.metrics) > r2v(b.metrics);
    if (a.metrics.rmse != b.metrics.rmse) return a.metrics.rmse < b.metrics.rmse;
    return a.metrics.mae < b.metrics.mae;
  });
  for (std::size_t i = 0; i < models.size(); ++i) models[i].rank = i + 1;
  return models;
}

// ---------------------------------------------------- descriptive stats ---

struct ColumnStats {
  std::string name;
  std::size_t n = 0;
  std::size_t missing = 0;
  bool all_missing = false;
  double mean = 0.0, sd = 0.0, min = 0.0, max = 0.0;
  std::optional<double> skewness;  // undefined for constant columns
  std::optional<double> kurtosis;  // excess
};

inline ColumnStats describe_values(std::string name, std::span<const Cell> cells) {
  ColumnStats s;
  s.name = std::move(name);
  std::vector<double> v;
  for (const auto& c : cells) {
    if (c) v.push_back(*c);
    else ++s.missing;
  }
  s.n = v.size();
  if (v.empty()) {
    s.all_missing = true;
    return s;
  }
  const double n = static_cast<double>(v.size());
  for (double x : v) s.mean += x;
  s.mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.sd = std::sqrt(m2);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  if (m2 > 0.0) {
    s.skewness = m3 / std::pow(m2, 1.5);
    s.kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return s;
}

/// Moment statistics for every numeric column and the uplift target.
inline std::vector<ColumnStats> describe(const Dataset& ds) {
  std::vector<ColumnStats> out;
  std::vector<Cell> cells(ds.size());
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    for (std::size_t i = 0; i < ds.size(); ++i) cells[i] = ds.records[i].numeric[k];
    out.push_back(describe_values(std::string(kNumericNames[k]), cells));
  }
  for (std::size_t i = 0; i < ds.size(); ++i) cells[i] = ds.records[i].uplift_pct;
  out.push_back(describe_values(std::string(kUplift), cells));
  return out;
}

struct LinearFit {
  std::string feature;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

struct UnivariateReport {
  std::vector<LinearFit> fits;
  std::vector<std::string> skipped;  // "<feature>: <reason>"
};

inline std::optional<LinearFit> fit_line(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  if (std::set<double>(x.begin(), x.end()).size() < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 0.0;
  f.n = x.size();
  return f;
}

/// Ordinary least squares of uplift on each numeric column separately.
inline UnivariateReport univariate_fits(const Dataset& ds) {
  UnivariateReport rep;
  for (std::size_t k = 0; k < kNumericCount; ++k) {
    std::vector<double> x, y;
    for (const auto& r : ds.records)
      if (r.numeric[k] && r.uplift_pct) {
        x.push_back(*r.numeric[k]);
        y.push_back(*r.uplift_pct);
      }
    auto fit = fit_line(x, y);
    if (!fit) {
      rep.skipped.push_back(std::string(kNumericNames[k]) + ": fewer than 2 distinct values");
      continue;
    }
    fit->feature = kNumericNames[k];
    rep.fits.push_back(*fit);
  }
  return rep;
}

}  // namespace uplift
