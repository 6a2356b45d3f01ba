#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/matrix.hpp"
#include "uplift/metrics.hpp"
#include "uplift/models.hpp"
#include "uplift/rng.hpp"

namespace uplift {

// ---------------------------------------------------------------- folds ---

/// k near-equal folds from a seeded shuffle; the first n % k folds get one
/// extra row. Indices inside each fold are ascending.
inline std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (n < k) throw DataError("k-fold needs at least k rows (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  const auto perm = shuffled_indices(n, seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

/// All rows not in folds[held_out], ascending.
inline std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> held_out) {
  std::vector<char> mask(n, 0);
  for (std::size_t i : held_out) mask[i] = 1;
  std::vector<std::size_t> out;
  out.reserve(n - held_out.size());
  for (std::size_t i = 0; i < n; ++i)
    if (!mask[i]) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------- ridge ---

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.0;

  double predict(std::span<const double> z) const {
    if (z.size() != weights.size())
      throw ModelError("ridge expects " + std::to_string(weights.size()) + " inputs, got " + std::to_string(z.size()));
    double s = intercept;
    for (std::size_t j = 0; j < z.size(); ++j) s += weights[j] * z[j];
    return s;
  }
  friend bool operator==(const RidgeModel&, const RidgeModel&) = default;
};

namespace detail {

// Solves A x = b for symmetric positive (semi)definite A via Cholesky.
// Returns false when A is numerically singular.
inline bool cholesky_solve(std::vector<double> A, std::vector<double> b, std::size_t p, std::vector<double>& x) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < p; ++i) max_diag = std::max(max_diag, std::abs(A[i * p + i]));
  const double tol = 1e-12 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < p; ++j) {
    double d = A[j * p + j];
    for (std::size_t k = 0; k < j; ++k) d -= A[j * p + k] * A[j * p + k];
    if (!(d > tol)) return false;
    const double l = std::sqrt(d);
    A[j * p + j] = l;
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = A[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= A[i * p + k] * A[j * p + k];
      A[i * p + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= A[i * p + k] * b[k];
    b[i] = s / A[i * p + i];
  }
  x.assign(p, 0.0);
  for (std::size_t i = p; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < p; ++k) s -= A[k * p + i] * x[k];
    x[i] = s / A[i * p + i];
  }
  return true;
}

}  // namespace detail

/// Ridge regression on centred features with an unpenalized intercept:
/// (Zc' Zc + alpha I) w = Zc' yc,  intercept = mean(y) - w . mean(Z).
inline RidgeModel fit_ridge(const Matrix& Z, std::span<const double> y, double alpha) {
  if (alpha < 0.0) throw ConfigError("ridge alpha must be >= 0");
  if (Z.rows() < 2) throw DataError("ridge needs at least 2 rows");
  if (y.size() != Z.rows()) throw DataError("ridge target length mismatch");
  const std::size_t n = Z.rows(), p = Z.cols();
  std::vector<double> zmean(p, 0.0);
  double ymean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) zmean[j] += Z(i, j);
    ymean += y[i];
  }
  for (auto& m : zmean) m /= static_cast<double>(n);
  ymean /= static_cast<double>(n);

  std::vector<double> A(p * p, 0.0), b(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double zj = Z(i, j) - zmean[j];
      b[j] += zj * (y[i] - ymean);
      for (std::size_t k = 0; k <= j; ++k) A[j * p + k] += zj * (Z(i, k) - zmean[k]);
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k < j; ++k) A[k * p + j] = A[j * p + k];
    A[j * p + j] += alpha;
  }
  RidgeModel m;
  m.alpha = alpha;
  if (p > 0 && !detail::cholesky_solve(A, b, p, m.weights)) {
    if (alpha == 0.0) throw ModelError("ridge system is singular with alpha = 0; use alpha > 0");
    throw ModelError("ridge system is numerically singular");
  }
  m.intercept = ymean;
  for (std::size_t j = 0; j < p; ++j) m.intercept -= m.weights[j] * zmean[j];
  return m;
}

inline const std::vector<double> kRidgeAlphaGrid = {0.1, 1.0, 10.0, 100.0};

/// Grid alpha with the lowest mean k-fold CV RMSE; ties go to the smaller alpha.
inline double select_alpha(const Matrix& Z, std::span<const double> y, std::vector<double> grid = kRidgeAlphaGrid,
                           std::size_t k = 5, std::uint64_t seed = 0) {
  if (grid.empty()) throw ConfigError("alpha grid is empty");
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid.front();
  const auto folds = kfold_indices(Z.rows(), k, seed);
  double best_alpha = grid.front();
  double best = std::numeric_limits<double>::infinity();
  for (double alpha : grid) {
    double total = 0.0;
    for (const auto& fold : folds) {
      const auto train = complement(Z.rows(), fold);
      const auto m = fit_ridge(Z.select_rows(train), select(y, train), alpha);
      std::vector<double> yv, pv;
      for (std::size_t i : fold) {
        yv.push_back(y[i]);
        pv.push_back(m.predict(Z.row(i)));
      }
      total += rmse(yv, pv);
    }
    const double mean = total / static_cast<double>(folds.size());
    if (mean < best) {
      best = mean;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

// ------------------------------------------------------------- stacking ---

/// Observer hook: called before each out-of-fold base fit with the base
/// index, fold index and the training rows that fit will see.
using OofObserver = std::function<void(std::size_t base, std::size_t fold, std::span<const std::size_t> train_rows)>;

/// Level-2 matrix: entry (i, b) is the prediction for row i of base b fitted
/// on the other folds. `fit_predict(b, X_train, y_train, X_eval, seed)`
/// returns predictions for X_eval.
template <class FitPredict>
Matrix out_of_fold_predictions(const Matrix& X, std::span<const double> y, std::size_t n_bases,
                               const std::vector<std::vector<std::size_t>>& folds, std::uint64_t seed,
                               FitPredict&& fit_predict, const OofObserver& observer = {},
                               std::size_t workers = 1) {
  Matrix oof(X.rows(), n_bases, std::numeric_limits<double>::quiet_NaN());
  for (const auto& fold : folds)
    if (fold.empty()) throw DataError("stacking fold has no rows");
  std::vector<std::vector<std::size_t>> train_rows(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) train_rows[f] = complement(X.rows(), folds[f]);
  if (observer)
    for (std::size_t f = 0; f < folds.size(); ++f)
      for (std::size_t b = 0; b < n_bases; ++b) observer(b, f, train_rows[f]);
  parallel_for(folds.size() * n_bases, workers, [&](std::size_t task) {
    const std::size_t f = task / n_bases, b = task % n_bases;
    const auto& tr = train_rows[f];
    const auto pred = fit_predict(b, X.select_rows(tr), select(y, tr), X.select_rows(folds[f]), derive_seed(seed, f, b));
    for (std::size_t i = 0; i < folds[f].size(); ++i) oof(folds[f][i], b) = pred[i];
  });
  return oof;
}

struct StackingModel {
  std::vector<ModelConfig> base_configs;
  std::vector<Regressor> bases;  // refit on all training rows
  RidgeModel meta;
  Matrix oof;
  std::vector<std::size_t> fold_of_row;
  std::vector<double> alpha_grid = kRidgeAlphaGrid;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;

  std::vector<double> base_predictions(std::span<const double> x) const {
    std::vector<double> z(bases.size());
    for (std::size_t b = 0; b < bases.size(); ++b) z[b] = predict_one(bases[b], x);
    return z;
  }

  double predict(std::span<const double> x) const {
    detail::check_width(n_features, x.size());
    return meta.predict(base_predictions(x));
  }

  std::vector<double> predict(const Matrix& X) const {
    std::vector<double> out(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out[r] = predict(X.row(r));
    return out;
  }

  friend bool operator==(const StackingModel&, const StackingModel&) = default;
};

inline constexpr std::size_t kStackFolds = 5;

/// Stacked generalization: 5-fold out-of-fold base predictions feed a ridge
/// meta-learner whose alpha is chosen by CV; bases are then refit on all rows.
inline StackingModel fit_stacking(const Matrix& X, std::span<const double> y, const std::vector<ModelConfig>& base_configs,
                                  std::uint64_t seed, const FitOptions& options = {},
                                  const OofObserver& observer = {}) {
  if (base_configs.empty()) throw ConfigError("stacking needs at least one base model");
  if (X.rows() < 10) throw DataError("stacking needs at least 10 training rows");
  if (y.size() != X.rows()) throw DataError("target length mismatch");
  StackingModel m;
  m.base_configs = base_configs;
  m.seed = seed;
  m.n_features = X.cols();
  const auto folds = kfold_indices(X.rows(), kStackFolds, derive_seed(seed, "stack"));
  m.fold_of_row.assign(X.rows(), 0);
  for (std::size_t f = 0; f < folds.size(); ++f)
    for (std::size_t i : folds[f]) m.fold_of_row[i] = f;

  FitOptions inner = options;
  inner.workers = 1;
  m.oof = out_of_fold_predictions(
      X, y, base_configs.size(), folds, seed,
      [&](std::size_t b, const Matrix& Xtr, const std::vector<double>& ytr, const Matrix& Xev, std::uint64_t s) {
        return predict(fit_model(base_configs[b], Xtr, ytr, s, inner), Xev);
      },
      observer, options.workers);
  const double alpha = select_alpha(m.oof, y, m.alpha_grid, kStackFolds, derive_seed(seed, "alpha"));
  m.meta = fit_ridge(m.oof, y, alpha);
  for (std::size_t b = 0; b < base_configs.size(); ++b)
    m.bases.push_back(fit_model(base_configs[b], X, y, derive_seed(derive_seed(seed, "refit"), b), options));
  return m;
}

/// Base families for the hybrid configurations.
inline std::vector<ModelConfig> hybrid_bases(const std::string& name) {
  if (name == "hm1") return {ExtraTreesParams{}, GradientBoostingParams{}};
  if (name == "hm2") return {ExtraTreesParams{}, RegularizedBoostingParams{}};
  if (name == "hm3") return {GradientBoostingParams{}, RegularizedBoostingParams{}};
  if (name == "hm4") return {ExtraTreesParams{}, GradientBoostingParams{}, RegularizedBoostingParams{}};
  throw ConfigError("unknown hybrid '" + name + "' (expected hm1..hm4)");
}

}  // namespace uplift
