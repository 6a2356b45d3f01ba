#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uplift/data_model.hpp"
#include "uplift/learner.hpp"
#include "uplift/metrics.hpp"
#include "uplift/parallel.hpp"
#include "uplift/rng.hpp"

namespace uplift {

// ------------------------------------------------- permutation importance ---

struct ImportanceReport {
  std::vector<std::string> features;
  double baseline_rmse = 0.0;
  std::size_t repeats = 0;
  std::vector<std::vector<double>> raw;  // [feature][repeat] RMSE increase
  std::vector<double> mean;
  std::vector<std::size_t> order;  // descending mean, ties by index
  std::vector<double> shares;      // clipped at 0, sums to 1 (or all 0)
  std::vector<double> cumulative;  // running share along `order`
};

inline void finalize_importance(ImportanceReport& rep) {
  const std::size_t p = rep.mean.size();
  rep.order.resize(p);
  std::iota(rep.order.begin(), rep.order.end(), std::size_t{0});
  std::stable_sort(rep.order.begin(), rep.order.end(),
                   [&](std::size_t a, std::size_t b) { return rep.mean[a] > rep.mean[b]; });
  double total = 0.0;
  for (double m : rep.mean) total += std::max(m, 0.0);
  rep.shares.assign(p, 0.0);
  if (total > 0.0)
    for (std::size_t j = 0; j < p; ++j) rep.shares[j] = std::max(rep.mean[j], 0.0) / total;
  rep.cumulative.assign(p, 0.0);
  double run = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    run += rep.shares[rep.order[k]];
    rep.cumulative[k] = run;
  }
}

/// RMSE increase when each column of X_val is shuffled, averaged over
/// `repeats`. `predict` maps a matrix of rows to predictions.
template <class Predict>
ImportanceReport permutation_importance(const Predict& predict, const Matrix& X_val, std::span<const double> y_val,
                                        std::vector<std::string> features, std::size_t repeats = 5,
                                        std::uint64_t seed = 0, std::size_t workers = 1) {
  if (repeats == 0) throw ConfigError("permutation importance needs repeats >= 1");
  if (X_val.rows() != y_val.size()) throw DataError("validation rows and targets differ in length");
  if (features.size() != X_val.cols()) throw ConfigError("feature names do not match matrix width");
  ImportanceReport rep;
  rep.features = std::move(features);
  rep.repeats = repeats;
  rep.baseline_rmse = rmse(y_val, predict(X_val));
  const std::size_t p = X_val.cols();
  rep.raw.assign(p, std::vector<double>(repeats, 0.0));
  parallel_for(p * repeats, workers, [&](std::size_t task) {
    const std::size_t j = task / repeats, r = task % repeats;
    const auto perm = shuffled_indices(X_val.rows(), derive_seed(seed, j, r));
    Matrix X = X_val;
    for (std::size_t i = 0; i < X.rows(); ++i) X(i, j) = X_val(perm[i], j);
    rep.raw[j][r] = rmse(y_val, predict(X)) - rep.baseline_rmse;
  });
  rep.mean.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    rep.mean[j] = std::accumulate(rep.raw[j].begin(), rep.raw[j].end(), 0.0) / static_cast<double>(repeats);
  finalize_importance(rep);
  return rep;
}

/// Smallest prefix of the importance order whose cumulative share reaches
/// `threshold`. Returns column indices in importance order.
inline std::vector<std::size_t> select_top_features(const ImportanceReport& rep, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("selection threshold must lie in (0, 1]");
  const bool any_positive = std::any_of(rep.shares.begin(), rep.shares.end(), [](double s) { return s > 0.0; });
  if (!any_positive) return rep.order;
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < rep.order.size(); ++k) {
    const std::size_t j = rep.order[k];
    if (rep.shares[j] <= 0.0) break;
    out.push_back(j);
    if (rep.cumulative[k] >= threshold - 1e-12) break;
  }
  return out;
}

// -------------------------------------------------- reduced-feature flow ---

struct ReducedLearner {
  FittedLearner learner;
  ImportanceReport importance;  // on the internal holdout, model-input space
  std::vector<std::size_t> selected;
};

inline constexpr double kReductionShare = 0.95;
inline constexpr double kImportanceHoldout = 0.8;

/// Permutation importance on an internal holdout of the training rows,
/// keep the top-share prefix, then refit on every training row.
inline ReducedLearner fit_reduced_learner(const Matrix& X_raw, std::span<const double> y,
                                          const std::vector<std::string>& names, const LearnerConfig& config,
                                          const PipelineStages& stages, std::uint64_t seed,
                                          double threshold = kReductionShare, const FitOptions& options = {}) {
  const auto split = train_test_split(X_raw.rows(), kImportanceHoldout, derive_seed(seed, "pi-holdout"));
  const Matrix X_fit = X_raw.select_rows(split.train), X_hold = X_raw.select_rows(split.test);
  const auto y_fit = select(y, split.train), y_hold = select(y, split.test);
  const auto probe = fit_learner(X_fit, y_fit, names, config, stages, seed, options);

  ReducedLearner out;
  out.importance = permutation_importance(
      [&](const Matrix& Z) { return uplift::predict(probe.model, Z); }, probe.pipeline.apply(X_hold), y_hold,
      probe.pipeline.feature_names_out, 5, derive_seed(seed, "pi"), options.workers);
  out.selected = select_top_features(out.importance, threshold);
  std::sort(out.selected.begin(), out.selected.end());

  out.learner.config = config;
  out.learner.pipeline = fit_pipeline(X_raw, names, stages).with_selection(out.selected);
  out.learner.model = fit_trained_model(config, out.learner.pipeline.apply(X_raw), y, seed, options);
  return out;
}

// ----------------------------------------------------- partial dependence ---

struct PDPAxis {
  std::string feature;
  std::size_t column = 0;
  std::vector<double> ticks;
};

struct PDPGrid {
  std::vector<PDPAxis> axes;
  std::vector<double> values;  // row-major: first axis is the row index

  std::size_t rows() const { return axes.empty() ? 0 : axes[0].ticks.size(); }
  std::size_t cols() const { return axes.size() < 2 ? 1 : axes[1].ticks.size(); }
  double at(std::size_t i, std::size_t j = 0) const { return values[i * cols() + j]; }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  if (n > 1) out.back() = hi;
  return out;
}

/// Averaged raw-unit partial dependence. Overrides are applied before the
/// pipeline so derived polynomial terms follow the axis values.
template <class PredictRaw>
PDPGrid partial_dependence(const PredictRaw& predict_raw, const Matrix& data_raw,
                           const std::vector<std::string>& names, const std::vector<std::string>& axes,
                           std::size_t resolution, std::size_t workers = 1) {
  if (axes.empty() || axes.size() > 2) throw ConfigError("partial dependence takes one or two axes");
  if (resolution < 2) throw ConfigError("partial dependence resolution must be at least 2");
  if (data_raw.rows() == 0) throw DataError("partial dependence needs at least one data row");
  if (axes.size() == 2 && axes[0] == axes[1]) throw ConfigError("partial dependence axes must differ");
  PDPGrid grid;
  for (const auto& a : axes) {
    const auto it = std::find(names.begin(), names.end(), a);
    if (it == names.end()) throw SchemaError(a);
    PDPAxis axis{a, static_cast<std::size_t>(it - names.begin()), {}};
    const auto col = data_raw.column(axis.column);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    axis.ticks = linspace(*lo, *hi, resolution);
    grid.axes.push_back(std::move(axis));
  }
  const std::size_t rows = grid.rows(), cols = grid.cols();
  grid.values.assign(rows * cols, 0.0);
  parallel_for(rows * cols, workers, [&](std::size_t cell) {
    Matrix X = data_raw;
    const std::size_t i = cell / cols, j = cell % cols;
    for (std::size_t r = 0; r < X.rows(); ++r) {
      X(r, grid.axes[0].column) = grid.axes[0].ticks[i];
      if (grid.axes.size() == 2) X(r, grid.axes[1].column) = grid.axes[1].ticks[j];
    }
    const auto yhat = predict_raw(X);
    grid.values[cell] = std::accumulate(yhat.begin(), yhat.end(), 0.0) / static_cast<double>(yhat.size());
  });
  return grid;
}

inline PDPGrid partial_dependence(const FittedLearner& learner, const Matrix& data_raw,
                                  const std::vector<std::string>& axes, std::size_t resolution,
                                  std::size_t workers = 1) {
  return partial_dependence([&](const Matrix& X) { return learner.predict(X); }, data_raw,
                            learner.pipeline.feature_names_in, axes, resolution, workers);
}

/// Cell of the largest value, as (row, col).
inline std::pair<std::size_t, std::size_t> argmax(const PDPGrid& g) {
  const auto it = std::max_element(g.values.begin(), g.values.end());
  const auto k = static_cast<std::size_t>(it - g.values.begin());
  return {k / g.cols(), k % g.cols()};
}

// ------------------------------------------------------ response surface ---

/// Empirical mean uplift per bin. Bin k is [edges[k], edges[k+1]); the last
/// bin is closed on the right.
struct BinnedSurface {
  std::vector<double> row_edges;
  std::vector<double> col_edges;
  std::vector<std::optional<double>> mean;  // empty bins hold nullopt
  std::vector<std::size_t> counts;
  std::size_t out_of_range = 0;

  std::size_t rows() const { return row_edges.size() - 1; }
  std::size_t cols() const { return col_edges.size() < 2 ? 1 : col_edges.size() - 1; }
  const std::optional<double>& at(std::size_t i, std::size_t j = 0) const { return mean[i * cols() + j]; }

  /// Populated bin with the largest mean; ties go to the first in row-major order.
  std::optional<std::pair<std::size_t, std::size_t>> argmax() const {
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < mean.size(); ++k)
      if (mean[k] && (!best || *mean[k] > *mean[*best])) best = k;
    if (!best) return std::nullopt;
    return std::pair{*best / cols(), *best % cols()};
  }
};

inline std::optional<std::size_t> bin_of(double v, std::span<const double> edges) {
  if (edges.size() < 2 || v < edges.front() || v > edges.back() || std::isnan(v)) return std::nullopt;
  if (v == edges.back()) return edges.size() - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  return static_cast<std::size_t>(it - edges.begin()) - 1;
}

inline void check_edges(std::span<const double> edges, const char* what) {
  if (edges.size() < 2) throw ConfigError(std::string(what) + " bins need at least two edges");
  for (std::size_t k = 1; k < edges.size(); ++k)
    if (!(edges[k] > edges[k - 1])) throw ConfigError(std::string(what) + " bin edges must increase strictly");
}

inline BinnedSurface bin_means(std::span<const double> a, std::span<const double> b, std::span<const double> target,
                               std::vector<double> a_edges, std::vector<double> b_edges) {
  check_edges(a_edges, "row");
  const bool two_d = !b_edges.empty();
  if (two_d) check_edges(b_edges, "column");
  BinnedSurface s;
  s.row_edges = std::move(a_edges);
  s.col_edges = std::move(b_edges);
  const std::size_t cells = s.rows() * s.cols();
  std::vector<double> sums(cells, 0.0);
  s.counts.assign(cells, 0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto bi = bin_of(a[i], s.row_edges);
    const auto bj = two_d ? bin_of(b[i], s.col_edges) : std::optional<std::size_t>{0};
    if (!bi || !bj) {
      ++s.out_of_range;
      continue;
    }
    const std::size_t k = *bi * s.cols() + *bj;
    sums[k] += target[i];
    ++s.counts[k];
  }
  s.mean.assign(cells, std::nullopt);
  for (std::size_t k = 0; k < cells; ++k)
    if (s.counts[k] > 0) s.mean[k] = sums[k] / static_cast<double>(s.counts[k]);
  return s;
}

/// Mean observed uplift over (voltage, plasma time) bins. Rows with a
/// missing voltage, time or uplift count as out of range.
inline BinnedSurface response_surface(const Dataset& ds, std::vector<double> voltage_edges,
                                      std::vector<double> time_edges) {
  std::vector<double> v, t, u;
  std::size_t skipped = 0;
  for (const auto& r : ds.records) {
    const auto vv = r[Numeric::voltage_kv], tt = r[Numeric::plasma_time_s];
    if (!vv || !tt || !r.uplift_pct) {
      ++skipped;
      continue;
    }
    v.push_back(*vv);
    t.push_back(*tt);
    u.push_back(*r.uplift_pct);
  }
  auto s = bin_means(v, t, u, std::move(voltage_edges), std::move(time_edges));
  s.out_of_range += skipped;
  return s;
}

/// Mean uplift by baseline-germination bin (vigor profile).
inline BinnedSurface vigor_uplift_profile(const Dataset& ds, std::vector<double> baseline_edges) {
  std::vector<double> b, u;
  std::size_t skipped = 0;
  for (const auto& r : ds.records) {
    const auto bb = r[Numeric::baseline_germination_pct];
    if (!bb || !r.uplift_pct) {
      ++skipped;
      continue;
    }
    b.push_back(*bb);
    u.push_back(*r.uplift_pct);
  }
  auto s = bin_means(b, {}, u, std::move(baseline_edges), {});
  s.out_of_range += skipped;
  return s;
}

}  // namespace uplift
