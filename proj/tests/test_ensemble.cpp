#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "uplift/uplift.hpp"

using namespace uplift;

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Max relative residual of (Zc'Zc + alpha I) w = Zc'yc, computed independently of the solver.
double normal_equation_residual(const Matrix& Z, std::span<const double> y, const RidgeModel& m) {
  const std::size_t n = Z.rows(), p = Z.cols();
  std::vector<double> zm(p);
  for (std::size_t j = 0; j < p; ++j) zm[j] = mean_of(Z.column(j));
  const double ym = mean_of(y);
  double worst = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    double lhs = m.alpha * m.weights[j], rhs = 0.0, scale = std::abs(m.alpha * m.weights[j]);
    for (std::size_t i = 0; i < n; ++i) {
      double zw = 0.0;
      for (std::size_t k = 0; k < p; ++k) zw += (Z(i, k) - zm[k]) * m.weights[k];
      lhs += (Z(i, j) - zm[j]) * zw;
      rhs += (Z(i, j) - zm[j]) * (y[i] - ym);
      scale += std::abs((Z(i, j) - zm[j]) * (y[i] - ym));
    }
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(scale, 1e-300));
  }
  return worst;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST(KFold, PartitionsExactly) {
  for (std::size_t n : {10u, 23u, 101u}) {
    const auto folds = kfold_indices(n, 5, 17);
    ASSERT_EQ(folds.size(), 5u);
    std::vector<int> seen(n, 0);
    for (const auto& f : folds) {
      EXPECT_TRUE(f.size() == n / 5 || f.size() == n / 5 + 1);
      for (auto i : f) ++seen[i];
    }
    for (int c : seen) EXPECT_EQ(c, 1);
  }
  EXPECT_EQ(kfold_indices(40, 5, 3), kfold_indices(40, 5, 3));
  EXPECT_THROW(kfold_indices(3, 5, 1), DataError);
}

TEST(Ridge, HandSolvedSingleFeature) {
  const Matrix Z = Matrix::from_rows({{0.0}, {1.0}});
  const std::vector<double> y{0.0, 1.0};
  const auto m = fit_ridge(Z, y, 1.0);
  EXPECT_NEAR(m.weights[0], 1.0 / 3.0, 1e-10);
  EXPECT_NEAR(m.intercept, 1.0 / 3.0, 1e-10);
  EXPECT_NEAR(m.predict(std::vector<double>{1.0}), 2.0 / 3.0, 1e-10);
}

TEST(Ridge, ZeroAlphaIsLeastSquares) {
  const auto Z = testutil::random_matrix(40, 3, 5);
  auto y = noise(40, 6);
  for (std::size_t i = 0; i < 40; ++i) y[i] += 2.0 * Z(i, 0) - Z(i, 2);
  const auto m = fit_ridge(Z, y, 0.0);
  double sum_res = 0.0;
  std::vector<double> dots(3, 0.0);
  for (std::size_t i = 0; i < 40; ++i) {
    const double r = y[i] - m.predict(Z.row(i));
    sum_res += r;
    for (std::size_t j = 0; j < 3; ++j) dots[j] += r * Z(i, j);
  }
  EXPECT_NEAR(sum_res, 0.0, 1e-10);
  for (double d : dots) EXPECT_NEAR(d, 0.0, 1e-10);
}

TEST(Ridge, HugeAlphaShrinksToMean) {
  const auto Z = testutil::random_matrix(30, 2, 7);
  const auto y = noise(30, 8);
  const auto m = fit_ridge(Z, y, 1e12);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(m.predict(Z.row(i)), mean_of(y), 1e-6);
}

TEST(Ridge, SatisfiesNormalEquations) {
  const auto Z = testutil::random_matrix(60, 4, 9);
  const auto y = noise(60, 10);
  for (double alpha : {0.0, 0.1, 1.0, 10.0, 100.0})
    EXPECT_LE(normal_equation_residual(Z, y, fit_ridge(Z, y, alpha)), 1e-8) << alpha;
}

TEST(Ridge, SingularWithoutPenaltyIsAnError) {
  Matrix Z(10, 2);
  for (std::size_t i = 0; i < 10; ++i) Z(i, 0) = Z(i, 1) = static_cast<double>(i);
  const auto y = noise(10, 1);
  try {
    fit_ridge(Z, y, 0.0);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha > 0"), std::string::npos);
  }
  EXPECT_NO_THROW(fit_ridge(Z, y, 1.0));
  EXPECT_THROW(fit_ridge(Z, y, -1.0), ConfigError);
}

TEST(SelectAlpha, SingleValueGrid) {
  const auto Z = testutil::random_matrix(20, 2, 1);
  EXPECT_EQ(select_alpha(Z, noise(20, 2), {10.0}), 10.0);
  EXPECT_THROW(select_alpha(Z, noise(20, 2), {}), ConfigError);
}

TEST(SelectAlpha, NoiselessLinearPrefersSmallest) {
  const auto Z = testutil::random_matrix(50, 2, 3);
  std::vector<double> y(50);
  for (std::size_t i = 0; i < 50; ++i) y[i] = 4.0 * Z(i, 0) + 2.0 * Z(i, 1) + 1.0;
  EXPECT_EQ(select_alpha(Z, y), 0.1);
}

TEST(SelectAlpha, PureNoisePrefersStrongerPenalty) {
  int larger = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const auto Z = testutil::random_matrix(40, 3, 1000 + t);
    if (select_alpha(Z, noise(40, 2000 + t), kRidgeAlphaGrid, 5, t) > 0.1) ++larger;
  }
  EXPECT_GE(larger, 40);
}

TEST(Stacking, NoRowPredictsItself) {
  // Column 0 carries the row id so each fit can check its training rows.
  const std::size_t n = 37;
  Matrix X(n, 2);
  for (std::size_t i = 0; i < n; ++i) X(i, 0) = static_cast<double>(i);
  const auto y = noise(n, 4);
  const auto folds = kfold_indices(n, 5, 99);
  std::size_t fits = 0;
  const auto oof = out_of_fold_predictions(X, y, 2, folds, 1,
                                           [&](std::size_t, const Matrix& Xtr, const std::vector<double>&,
                                               const Matrix& Xev, std::uint64_t) {
                                             std::set<double> train_ids;
                                             for (std::size_t r = 0; r < Xtr.rows(); ++r) train_ids.insert(Xtr(r, 0));
                                             for (std::size_t r = 0; r < Xev.rows(); ++r)
                                               EXPECT_EQ(train_ids.count(Xev(r, 0)), 0u);
                                             ++fits;
                                             return Xev.column(0);
                                           });
  EXPECT_EQ(fits, 10u);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(oof(i, b), static_cast<double>(i));
}

TEST(Stacking, ObserverSeesDisjointTrainingRows) {
  const auto d = testutil::synthetic_encoded(3, 60);
  const std::vector<ModelConfig> bases{with_params(ExtraTreesParams{}, {{"n_estimators", 10}}),
                                       with_params(GradientBoostingParams{}, {{"n_estimators", 20}})};
  std::vector<std::tuple<std::size_t, std::size_t, std::vector<std::size_t>>> calls;
  const auto m = fit_stacking(d.X, d.y, bases, 8, {},
                              [&](std::size_t b, std::size_t f, std::span<const std::size_t> rows) {
                                calls.emplace_back(b, f, std::vector<std::size_t>(rows.begin(), rows.end()));
                              });
  ASSERT_EQ(calls.size(), 10u);
  for (const auto& [b, f, rows] : calls)
    for (auto i : rows) EXPECT_NE(m.fold_of_row[i], f) << "base " << b;
  for (std::size_t i = 0; i < m.oof.rows(); ++i)
    for (std::size_t b = 0; b < 2; ++b) EXPECT_TRUE(std::isfinite(m.oof(i, b)));
}

TEST(Stacking, MeanBaseCollapsesToMean) {
  const auto d = testutil::synthetic_encoded(5, 50);
  const auto m = fit_stacking(d.X, d.y, {MeanParams{}}, 2);
  const double ybar = mean_of(d.y);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(m.predict(d.X.row(i)), ybar, 1e-9);
}

TEST(Stacking, OracleOutweighsNoise) {
  const std::size_t n = 80;
  const auto y = noise(n, 21);
  Matrix X(n, 1);
  for (std::size_t i = 0; i < n; ++i) X(i, 0) = y[i];
  const auto folds = kfold_indices(n, 5, 3);
  const auto oof = out_of_fold_predictions(X, y, 2, folds, 4,
                                           [](std::size_t b, const Matrix&, const std::vector<double>&,
                                              const Matrix& Xev, std::uint64_t seed) {
                                             if (b == 0) return Xev.column(0);
                                             return noise(Xev.rows(), seed);
                                           });
  const auto meta = fit_ridge(oof, y, select_alpha(oof, y));
  EXPECT_GE(std::abs(meta.weights[0]), 10.0 * std::abs(meta.weights[1]));
}

TEST(Stacking, MetaAveragesBases) {
  StackingModel m;
  m.n_features = 1;
  m.bases = {MeanModel{4.0, 1}, MeanModel{6.0, 1}};
  m.meta.weights = {0.5, 0.5};
  EXPECT_EQ(m.predict(std::vector<double>{0.0}), 5.0);
  EXPECT_THROW(m.predict(std::vector<double>{0.0, 1.0}), ModelError);
}

TEST(Stacking, SingleUnitWeightBaseIsIdentity) {
  const auto d = testutil::synthetic_encoded(6, 40);
  StackingModel m;
  m.n_features = d.X.cols();
  m.bases = {fit_extra_trees(d.X, d.y, {.n_estimators = 10}, 1)};
  m.meta.weights = {1.0};
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(m.predict(d.X.row(i)), predict_one(m.bases[0], d.X.row(i)));
}

TEST(Stacking, DeterministicAcrossWorkers) {
  const auto d = testutil::synthetic_encoded(7, 60);
  const std::vector<ModelConfig> bases{with_params(ExtraTreesParams{}, {{"n_estimators", 10}}),
                                       with_params(RegularizedBoostingParams{}, {{"n_estimators", 20}})};
  FitOptions three;
  three.workers = 3;
  const auto a = fit_stacking(d.X, d.y, bases, 11);
  const auto b = fit_stacking(d.X, d.y, bases, 11, three);
  EXPECT_EQ(a.predict(d.X), b.predict(d.X));
  for (double v : a.predict(testutil::random_matrix(20, d.X.cols(), 3))) EXPECT_TRUE(std::isfinite(v));
}

TEST(Stacking, TooFewRowsRejected) {
  const auto X = testutil::random_matrix(9, 2, 1);
  EXPECT_THROW(fit_stacking(X, noise(9, 1), {MeanParams{}}, 1), DataError);
}

TEST(Hybrids, Definitions) {
  EXPECT_EQ(hybrid_bases("hm1").size(), 2u);
  EXPECT_EQ(family_name(hybrid_bases("hm3")[0]), "gb");
  EXPECT_EQ(family_name(hybrid_bases("hm3")[1]), "xgb");
  EXPECT_EQ(hybrid_bases("hm4").size(), 3u);
  EXPECT_THROW(hybrid_bases("hm5"), ConfigError);
  EXPECT_TRUE(LearnerConfig::from_name("hm2").stacked());
  EXPECT_FALSE(LearnerConfig::from_name("et").stacked());
}
