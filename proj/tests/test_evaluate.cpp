#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "uplift/uplift.hpp"

using namespace uplift;

namespace {

Dataset dataset_from(const std::vector<std::pair<double, double>>& voltage_uplift) {
  Dataset ds;
  for (auto [v, u] : voltage_uplift) {
    SeedRecord r;
    r.species = "wheat";
    r.cultivar = "w1";
    for (auto& c : r.numeric) c = 1.0;
    r[Numeric::voltage_kv] = v;
    r.uplift_pct = u;
    ds.records.push_back(r);
  }
  return ds;
}

LearnerConfig small_et(std::size_t trees = 30) {
  return LearnerConfig::from_name("et").with({{"n_estimators", static_cast<double>(trees)}});
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
  const std::vector<double> y{1.0, 2.0, 5.0};
  const auto m = score(y, y);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.r2.value(), 1.0);
}

TEST(Metrics, MeanPredictorHasZeroR2) {
  const std::vector<double> y{1.0, 2.0, 6.0}, yhat(3, 3.0);
  EXPECT_NEAR(r2(y, yhat), 0.0, 1e-15);
}

TEST(Metrics, HandArithmetic) {
  const std::vector<double> y{1.0, 4.0}, yhat{1.0, 2.0};
  EXPECT_NEAR(rmse(y, yhat), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(mae(y, yhat), 1.0, 1e-15);
  EXPECT_NEAR(r2(y, yhat), 1.0 - 4.0 / 4.5, 1e-15);
}

TEST(Metrics, ConstantTargetR2Undefined) {
  const std::vector<double> y{3.0, 3.0}, yhat{1.0, 2.0};
  EXPECT_THROW(r2(y, yhat), DomainError);
  EXPECT_FALSE(score(y, yhat).r2.has_value());
  EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(Metrics, RmseDominatesMaeAndR2ShiftInvariant) {
  Rng rng(4);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> y(n), yhat(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng.normal() * 10.0;
      yhat[i] = rng.normal() * 10.0;
    }
    ASSERT_GE(rmse(y, yhat), mae(y, yhat) * (1.0 - 1e-12));
    if (t % 100 == 0) {
      auto ys = y, ps = yhat;
      for (std::size_t i = 0; i < n; ++i) {
        ys[i] += 7.0;
        ps[i] += 7.0;
      }
      EXPECT_NEAR(r2(ys, ps), r2(y, yhat), 1e-9);
    }
  }
}

TEST(Metrics, MapeSkipsZeroTruth) {
  const std::vector<double> y{0.0, 10.0}, yhat{5.0, 12.0};
  EXPECT_NEAR(mape(y, yhat).value(), 20.0, 1e-12);
  EXPECT_FALSE(mape(std::vector<double>{0.0}, std::vector<double>{1.0}).has_value());
}

TEST(EvalReport, GroupsBySpecies) {
  const std::vector<double> y{1.0, 2.0, 3.0, 5.0}, yhat{1.0, 2.0, 4.0, 4.0};
  const std::vector<std::string> sp{"a", "a", "b", "b"};
  const auto rep = evaluate_predictions("test", y, yhat, sp);
  ASSERT_EQ(rep.per_species.size(), 2u);
  EXPECT_EQ(rep.per_species.at("a").rmse, 0.0);
  EXPECT_EQ(rep.per_species.at("b").mae, 1.0);
  EXPECT_EQ(rep.residuals.size(), 4u);
}

TEST(KFoldCv, BalancedFoldSizes) {
  const auto folds = kfold_indices(196, 5, 1);
  std::vector<std::size_t> sizes;
  for (const auto& f : folds) sizes.push_back(f.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{40, 39, 39, 39, 39}));
}

TEST(KFoldCv, EveryRowValidatedOnceAndMeanModelCannotWin) {
  const auto d = testutil::synthetic_encoded(2, 100);
  const auto rep = kfold_cv(d.X, d.y, d.feature_names, LearnerConfig::from_name("mean"), {}, 5, 3);
  std::vector<int> seen(100, 0);
  for (const auto& f : rep.folds)
    for (auto i : f) ++seen[i];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_LE(rep.pooled.r2.value(), 0.0);
  EXPECT_EQ(rep.fold_metrics.size(), 5u);
  EXPECT_THROW(kfold_cv(d.X.select_rows(std::vector<std::size_t>{0, 1, 2}), std::vector<double>{1, 2, 3},
                        d.feature_names, LearnerConfig::from_name("mean"), {}, 5, 3),
               DataError);
}

TEST(GridSearch, SingleConfigGrid) {
  const auto d = testutil::synthetic_encoded(3, 60);
  GridSpec g{{{"n_estimators", {10}}}};
  const auto res = grid_search(d.X, d.y, d.feature_names, small_et(), g, {}, 5, 1);
  ASSERT_EQ(res.table.size(), 1u);
  EXPECT_EQ(res.best_index, 0u);
  EXPECT_EQ(res.best_params.at("n_estimators"), 10.0);
}

TEST(GridSearch, MoreTreesWin) {
  const auto d = testutil::synthetic_encoded(4, 120);
  GridSpec g{{{"n_estimators", {1, 400}}}};
  const auto res = grid_search(d.X, d.y, d.feature_names, small_et(), g, PipelineStages::none(), 5, 2);
  EXPECT_EQ(res.best_params.at("n_estimators"), 400.0);
}

TEST(GridSearch, TiesKeepFirstDeclaredAndAreReproducible) {
  const auto d = testutil::synthetic_encoded(5, 60);
  GridSpec g{{{"n_estimators", {20, 20}}}};
  const auto a = grid_search(d.X, d.y, d.feature_names, small_et(), g, {}, 5, 7);
  EXPECT_EQ(a.table[0].mean_rmse, a.table[1].mean_rmse);
  EXPECT_EQ(a.best_index, 0u);
  const auto b = grid_search(d.X, d.y, d.feature_names, small_et(), g, {}, 5, 7, 2);
  EXPECT_EQ(a.table[0].fold_rmse, b.table[0].fold_rmse);
}

TEST(GridSearch, ExpandsInDeclaredOrder) {
  GridSpec g{{{"a", {1, 2}}, {"b", {3, 4, 5}}}};
  const auto cfgs = g.expand();
  ASSERT_EQ(cfgs.size(), 6u);
  EXPECT_EQ(cfgs[0].at("a"), 1.0);
  EXPECT_EQ(cfgs[0].at("b"), 3.0);
  EXPECT_EQ(cfgs[1].at("b"), 4.0);
  EXPECT_EQ(cfgs[3].at("a"), 2.0);
  EXPECT_THROW((GridSpec{{{"a", {}}}}.expand()), ConfigError);
}

TEST(Loco, OneFoldPerCultivarWithDisjointRows) {
  const auto d = testutil::synthetic_encoded(6, 90);
  const auto rep = loco_cv(d, small_et(10), {}, 1);
  const std::set<std::string> cultivars(d.cultivar.begin(), d.cultivar.end());
  ASSERT_EQ(rep.folds.size(), cultivars.size());
  std::size_t pooled = 0;
  for (const auto& f : rep.folds) {
    for (auto i : f.test_rows) EXPECT_EQ(d.cultivar[i], f.cultivar);
    for (auto i : f.train_rows) EXPECT_NE(d.cultivar[i], f.cultivar);
    EXPECT_EQ(f.test_rows.size() + f.train_rows.size(), d.size());
    pooled += f.test_rows.size();
  }
  EXPECT_EQ(pooled, rep.predictions.size());
  EXPECT_EQ(rep.overall.n, d.size());
}

TEST(Loco, UnknownCultivarSkippedWithWarning) {
  const auto d = testutil::synthetic_encoded(7, 60);
  const auto rep = loco_cv(d, small_et(5), {}, 1, 1, {d.cultivar[0], "ghost"});
  EXPECT_EQ(rep.folds.size(), 1u);
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("ghost"), std::string::npos);
}

TEST(Ranking, R2ThenRmseThenMae) {
  auto m = [](double r2v, double rm, double ma) {
    Metrics x;
    x.r2 = r2v;
    x.rmse = rm;
    x.mae = ma;
    return x;
  };
  const auto ranked = rank_models({{"a", m(0.9, 3.0, 2.0)}, {"b", m(0.92, 3.5, 2.0)}, {"c", m(0.9, 3.0, 1.5)},
                                   {"d", m(0.9, 2.9, 2.5)}});
  std::vector<std::string> order;
  for (const auto& r : ranked) order.push_back(r.name);
  EXPECT_EQ(order, (std::vector<std::string>{"b", "d", "c", "a"}));
  EXPECT_EQ(ranked[0].rank, 1u);
}

TEST(Describe, SymmetricColumn) {
  const std::vector<Cell> c{1.0, 2.0, 3.0, std::nullopt};
  const auto s = describe_values("x", c);
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_NEAR(s.sd, std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.skewness.value(), 0.0, 1e-15);
  EXPECT_EQ(s.missing, 1u);
  EXPECT_EQ(s.min, 1.0);
  EXPECT_EQ(s.max, 3.0);
}

TEST(Describe, ConstantAndMissingColumns) {
  const std::vector<Cell> c(5, 4.0);
  const auto s = describe_values("x", c);
  EXPECT_EQ(s.sd, 0.0);
  EXPECT_FALSE(s.skewness.has_value());
  EXPECT_FALSE(s.kurtosis.has_value());
  const std::vector<Cell> none(3, std::nullopt);
  EXPECT_TRUE(describe_values("y", none).all_missing);
}

TEST(Describe, ExponentialSkewness) {
  Rng rng(12);
  std::vector<Cell> c;
  for (int i = 0; i < 10000; ++i) c.push_back(-std::log(1.0 - rng.uniform()));
  EXPECT_NEAR(describe_values("e", c).skewness.value(), 2.0, 0.15);
}

TEST(Univariate, ExactLine) {
  const auto rep = univariate_fits(dataset_from({{1.0, 2.0}, {2.0, 4.0}, {5.0, 10.0}}));
  ASSERT_EQ(rep.fits.size(), 1u);
  EXPECT_EQ(rep.fits[0].feature, "voltage_kv");
  EXPECT_NEAR(rep.fits[0].slope, 2.0, 1e-12);
  EXPECT_NEAR(rep.fits[0].intercept, 0.0, 1e-12);
  EXPECT_NEAR(rep.fits[0].r2, 1.0, 1e-12);
  EXPECT_EQ(rep.skipped.size(), kNumericCount - 1);
}

TEST(Univariate, UncorrelatedGivesZero) {
  const auto rep = univariate_fits(dataset_from({{-1.0, 1.0}, {0.0, -2.0}, {1.0, 1.0}}));
  ASSERT_EQ(rep.fits.size(), 1u);
  EXPECT_NEAR(rep.fits[0].slope, 0.0, 1e-15);
  EXPECT_NEAR(rep.fits[0].r2, 0.0, 1e-15);
}
