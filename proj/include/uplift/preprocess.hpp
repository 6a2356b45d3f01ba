#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/matrix.hpp"
#include "uplift/schema.hpp"

namespace uplift {

/// Yeo-Johnson power transform. Strictly increasing in x for every lambda.
inline double yeo_johnson(double x, double lambda) noexcept {
  if (x >= 0.0) {
    if (lambda == 0.0) return std::log1p(x);
    return std::expm1(lambda * std::log1p(x)) / lambda;
  }
  const double p = 2.0 - lambda;
  if (p == 0.0) return -std::log1p(-x);
  return -std::expm1(p * std::log1p(-x)) / p;
}

/// Profile log-likelihood of lambda: Gaussian fit of the transformed data
/// (variance profiled out) plus the log-Jacobian of the transform.
inline double yeo_johnson_log_likelihood(std::span<const double> x, double lambda) {
  const auto n = static_cast<double>(x.size());
  double mean = 0.0, jacobian = 0.0;
  std::vector<double> t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    t[i] = yeo_johnson(x[i], lambda);
    mean += t[i];
    jacobian += std::copysign(std::log1p(std::abs(x[i])), x[i]);
  }
  mean /= n;
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
}

struct YeoJohnsonFit {
  double lambda = 1.0;
  bool degenerate = false;  // constant column, identity returned
};

inline constexpr double kLambdaMin = -5.0;
inline constexpr double kLambdaMax = 5.0;

/// Maximum-likelihood lambda over [-5, 5]: grid at 0.01 then golden-section
/// refinement inside the best grid cell's neighbourhood.
inline YeoJohnsonFit fit_yeo_johnson(std::span<const double> column) {
  if (column.size() < 3) throw DataError("Yeo-Johnson fit needs at least 3 values");
  for (double v : column)
    if (!std::isfinite(v)) throw DataError("Yeo-Johnson fit needs finite values");
  const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
  if (*lo_it == *hi_it) return {1.0, true};

  constexpr int kSteps = 1000;
  constexpr double kStep = (kLambdaMax - kLambdaMin) / kSteps;
  double best = 1.0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kSteps; ++i) {
    const double lambda = kLambdaMin + kStep * i;
    const double ll = yeo_johnson_log_likelihood(column, lambda);
    if (ll > best_ll) {
      best_ll = ll;
      best = lambda;
    }
  }
  if (!std::isfinite(best_ll)) return {1.0, true};

  double a = std::max(kLambdaMin, best - kStep);
  double b = std::min(kLambdaMax, best + kStep);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = yeo_johnson_log_likelihood(column, c), fd = yeo_johnson_log_likelihood(column, d);
  for (int it = 0; it < 60; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = yeo_johnson_log_likelihood(column, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = yeo_johnson_log_likelihood(column, d);
    }
  }
  const double refined = 0.5 * (a + b);
  if (yeo_johnson_log_likelihood(column, refined) >= best_ll) best = refined;
  return {best, false};
}

/// (x - mean) / std, or 0 when std is 0.
inline double standardize(double x, double mean, double std) noexcept {
  return std == 0.0 ? 0.0 : (x - mean) / std;
}

// Degree-2 terms over (power, time, voltage), appended in this order:
// P^2, t^2, V^2, P*t, V*t, P*V.
struct PolySpec {
  static constexpr std::array<Numeric, 3> kBase = {Numeric::power_w, Numeric::plasma_time_s, Numeric::voltage_kv};
  static constexpr std::size_t kTerms = 6;

  static std::array<double, kTerms> terms(double p, double t, double v) noexcept {
    return {p * p, t * t, v * v, p * t, v * t, p * v};
  }

  static std::vector<std::string> term_names() {
    const std::string p(name_of(Numeric::power_w)), t(name_of(Numeric::plasma_time_s)),
        v(name_of(Numeric::voltage_kv));
    return {p + "^2", t + "^2", v + "^2", p + "*" + t, v + "*" + t, p + "*" + v};
  }
};

/// Appends the six polynomial terms to a feature row.
inline std::vector<double> expand_polynomial(std::span<const double> row, std::size_t power_idx,
                                             std::size_t time_idx, std::size_t voltage_idx) {
  std::vector<double> out(row.begin(), row.end());
  const auto t = PolySpec::terms(row[power_idx], row[time_idx], row[voltage_idx]);
  out.insert(out.end(), t.begin(), t.end());
  return out;
}

struct PipelineStages {
  bool yeo_johnson = true;
  bool polynomial = true;
  bool standardize = true;

  static PipelineStages none() { return {false, false, false}; }
  bool any() const noexcept { return yeo_johnson || polynomial || standardize; }
  friend bool operator==(const PipelineStages&, const PipelineStages&) = default;
};

// Frozen preprocessing state. Stage order: Yeo-Johnson -> polynomial
// expansion (on transformed P, t, V) -> standardization -> optional column
// selection. Every parameter is estimated from training rows only.
struct FittedPipeline {
  static constexpr int kVersion = 1;

  bool fitted = false;
  PipelineStages stages;
  std::vector<std::string> feature_names_in;
  std::vector<double> lambdas;        // per input column; 1 = identity
  std::array<std::size_t, 3> poly_base{};  // input indices of P, t, V
  std::vector<double> means;          // per expanded column
  std::vector<double> stds;
  std::vector<std::size_t> selected;  // empty: keep every column
  std::vector<std::string> feature_names_out;
  std::size_t degenerate_columns = 0;  // constant columns left untransformed

  std::size_t width_in() const noexcept { return feature_names_in.size(); }
  std::size_t width_out() const noexcept { return feature_names_out.size(); }

  std::vector<double> apply_row(std::span<const double> x) const {
    if (!fitted) throw ModelError("pipeline applied before fit");
    if (x.size() != width_in())
      throw ModelError("pipeline expects " + std::to_string(width_in()) + " features, got " + std::to_string(x.size()));
    std::vector<double> v(x.begin(), x.end());
    if (stages.yeo_johnson)
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = yeo_johnson(v[j], lambdas[j]);
    if (stages.polynomial) {
      const auto t = PolySpec::terms(v[poly_base[0]], v[poly_base[1]], v[poly_base[2]]);
      v.insert(v.end(), t.begin(), t.end());
    }
    if (stages.standardize)
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = uplift::standardize(v[j], means[j], stds[j]);
    if (selected.empty()) return v;
    std::vector<double> out;
    out.reserve(selected.size());
    for (std::size_t j : selected) out.push_back(v[j]);
    return out;
  }

  Matrix apply(const Matrix& X) const {
    if (!fitted) throw ModelError("pipeline applied before fit");
    Matrix out(X.rows(), width_out());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const auto v = apply_row(X.row(r));
      std::copy(v.begin(), v.end(), out.row_mut(r).begin());
    }
    return out;
  }

  /// Names of the columns before selection.
  std::vector<std::string> expanded_names() const {
    std::vector<std::string> names = feature_names_in;
    if (stages.polynomial) {
      auto extra = PolySpec::term_names();
      names.insert(names.end(), extra.begin(), extra.end());
    }
    return names;
  }

  /// Copy that keeps only `columns` (indices into the current output).
  FittedPipeline with_selection(std::span<const std::size_t> columns) const {
    FittedPipeline p = *this;
    std::vector<std::size_t> base(width_out());
    for (std::size_t j = 0; j < base.size(); ++j) base[j] = selected.empty() ? j : selected[j];
    p.selected.clear();
    p.feature_names_out.clear();
    const auto names = expanded_names();
    for (std::size_t c : columns) {
      if (c >= base.size()) throw ModelError("selected column out of range");
      p.selected.push_back(base[c]);
      p.feature_names_out.push_back(names[base[c]]);
    }
    return p;
  }

  friend bool operator==(const FittedPipeline&, const FittedPipeline&) = default;
};

/// Fits the pipeline on training rows. Yeo-Johnson is fitted only for
/// columns with at least three distinct values (indicator columns keep
/// lambda = 1).
inline FittedPipeline fit_pipeline(const Matrix& X_train, const std::vector<std::string>& names,
                                   PipelineStages stages = {}) {
  if (names.size() != X_train.cols()) throw ModelError("feature names do not match matrix width");
  if (X_train.rows() == 0) throw DataError("cannot fit pipeline on zero rows");
  FittedPipeline p;
  p.stages = stages;
  p.feature_names_in = names;
  p.lambdas.assign(names.size(), 1.0);

  Matrix work = X_train;
  if (stages.yeo_johnson) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto col = X_train.column(j);
      if (std::set<double>(col.begin(), col.end()).size() < 3) continue;
      const auto fit = fit_yeo_johnson(col);
      p.lambdas[j] = fit.lambda;
      if (fit.degenerate) ++p.degenerate_columns;
      for (std::size_t r = 0; r < work.rows(); ++r) work(r, j) = yeo_johnson(work(r, j), fit.lambda);
    }
  }
  if (stages.polynomial) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto it = std::find(names.begin(), names.end(), name_of(PolySpec::kBase[k]));
      if (it == names.end())
        throw ConfigError("polynomial expansion needs column '" + std::string(name_of(PolySpec::kBase[k])) + "'");
      p.poly_base[k] = static_cast<std::size_t>(it - names.begin());
    }
    Matrix expanded(work.rows(), work.cols() + PolySpec::kTerms);
    for (std::size_t r = 0; r < work.rows(); ++r) {
      const auto v = expand_polynomial(work.row(r), p.poly_base[0], p.poly_base[1], p.poly_base[2]);
      std::copy(v.begin(), v.end(), expanded.row_mut(r).begin());
    }
    work = std::move(expanded);
  }
  if (stages.standardize) {
    const auto n = static_cast<double>(work.rows());
    p.means.assign(work.cols(), 0.0);
    p.stds.assign(work.cols(), 0.0);
    for (std::size_t j = 0; j < work.cols(); ++j) {
      double m = 0.0;
      for (std::size_t r = 0; r < work.rows(); ++r) m += work(r, j);
      m /= n;
      double ss = 0.0;
      for (std::size_t r = 0; r < work.rows(); ++r) ss += (work(r, j) - m) * (work(r, j) - m);
      p.means[j] = m;
      p.stds[j] = std::sqrt(ss / n);
    }
  }
  p.fitted = true;
  p.feature_names_out = p.expanded_names();
  return p;
}

}  // namespace uplift
