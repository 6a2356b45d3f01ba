#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>

#include "uplift/error.hpp"

namespace uplift {

namespace detail {
inline void check_pair(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw DataError("metric inputs differ in length");
  if (y.empty()) throw DataError("metric inputs are empty");
}
}  // namespace detail

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double mae(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

/// 1 - SSE/SST; throws when the target is constant (SST = 0).
inline double r2(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  if (sst == 0.0) throw DomainError("R^2 undefined: target is constant (zero total sum of squares)");
  return 1.0 - sse / sst;
}

/// Mean absolute percentage error over rows with non-zero truth. Reported
/// only; never used for ranking.
inline std::optional<double> mape(std::span<const double> y, std::span<const double> yhat) {
  detail::check_pair(y, yhat);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) continue;
    s += std::abs((y[i] - yhat[i]) / y[i]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return 100.0 * s / static_cast<double>(n);
}

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> r2;  // empty when the target slice is constant
  std::size_t n = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

inline Metrics score(std::span<const double> y, std::span<const double> yhat) {
  Metrics m;
  m.rmse = rmse(y, yhat);
  m.mae = mae(y, yhat);
  m.n = y.size();
  try {
    m.r2 = r2(y, yhat);
  } catch (const DomainError&) {
    m.r2.reset();
  }
  return m;
}

}  // namespace uplift
