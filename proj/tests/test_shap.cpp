#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "uplift/uplift.hpp"

using namespace uplift;

namespace {

TreeNode leaf(double value, double cover) {
  TreeNode n;
  n.value = value;
  n.cover = cover;
  return n;
}

TreeNode split(int feature, double threshold, int left, int right, double cover) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.cover = cover;
  return n;
}

RegressionTree stump(int feature, double lo, double hi, double cover_lo = 50, double cover_hi = 50) {
  return RegressionTree({split(feature, 0.5, 1, 2, cover_lo + cover_hi), leaf(lo, cover_lo), leaf(hi, cover_hi)});
}

// Random complete tree of the given depth over p features with random covers.
RegressionTree random_tree(std::size_t depth, std::size_t p, Rng& rng) {
  std::vector<TreeNode> nodes;
  std::function<int(std::size_t, double)> grow = [&](std::size_t d, double cover) -> int {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (d == depth) {
      nodes[id] = leaf(rng.uniform(-5.0, 5.0), cover);
      return id;
    }
    const double frac = rng.uniform(0.2, 0.8);
    const int f = static_cast<int>(rng.below(p));
    const double thr = rng.uniform();
    const int l = grow(d + 1, cover * frac);
    const int r = grow(d + 1, cover * (1.0 - frac));
    nodes[id] = split(f, thr, l, r, cover);
    return id;
  };
  grow(0, 100.0);
  return RegressionTree(nodes);
}

double row_sum(const ShapMatrix& s, std::size_t r) {
  const auto v = s.values.row(r);
  return std::accumulate(v.begin(), v.end(), 0.0);
}

TreeEnsembleView view_of(const std::vector<RegressionTree>& trees, std::size_t p, double weight = 1.0,
                         double bias = 0.0) {
  TreeEnsembleView v;
  v.n_features = p;
  v.bias = bias;
  for (const auto& t : trees) v.trees.emplace_back(&t, weight);
  return v;
}

}  // namespace

TEST(TreeShap, StumpAttributesOnlyToItsFeature) {
  const std::vector<RegressionTree> trees{stump(2, 1.0, 5.0, 30, 70)};
  const auto view = view_of(trees, 4);
  const auto X = testutil::random_matrix(20, 4, 1);
  const auto s = tree_shap(view, X, X);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t j : {0u, 1u, 3u}) EXPECT_EQ(s.values(r, j), 0.0);
    EXPECT_NEAR(s.values(r, 2), view.predict(X.row(r)) - 3.8, 1e-12);
  }
  EXPECT_NEAR(s.base_value, 0.3 * 1.0 + 0.7 * 5.0, 1e-12);
}

TEST(TreeShap, DummyFeatureGetsExactlyZero) {
  Rng rng(2);
  std::vector<RegressionTree> trees;
  for (int t = 0; t < 5; ++t) trees.push_back(random_tree(3, 3, rng));  // features 0..2 only
  const auto view = view_of(trees, 5, 0.2);
  const auto X = testutil::random_matrix(30, 5, 3);
  const auto s = tree_shap(view, X, X);
  for (std::size_t r = 0; r < 30; ++r) {
    EXPECT_EQ(s.values(r, 3), 0.0);
    EXPECT_EQ(s.values(r, 4), 0.0);
  }
}

TEST(TreeShap, MatchesBruteForceOnDepthThreeTrees) {
  Rng rng(4);
  std::vector<RegressionTree> trees;
  for (int t = 0; t < 10; ++t) trees.push_back(random_tree(3, 8, rng));
  const auto view = view_of(trees, 8, 0.3, 1.5);
  const auto X = testutil::random_matrix(25, 8, 5);
  const auto s = tree_shap(view, X, X);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto oracle = brute_force_shapley(view, X.row(r));
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(s.values(r, j), oracle[j], 1e-6) << r << "," << j;
  }
}

TEST(TreeShap, MatchesBruteForceOnFittedBoosting) {
  const auto X = testutil::random_matrix(120, 6, 6);
  std::vector<double> y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = 3.0 * X(i, 0) * X(i, 1) + std::sin(4.0 * X(i, 2));
  const Regressor m = fit_gradient_boosting(X, y, {.n_estimators = 20, .learning_rate = 0.2, .max_depth = 4}, 1);
  const auto view = tree_view(m);
  const auto s = tree_shap(view, X.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4}), X);
  for (std::size_t r = 0; r < 5; ++r) {
    const auto oracle = brute_force_shapley(view, X.row(r));
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(s.values(r, j), oracle[j], 1e-6);
  }
}

class Additivity : public ::testing::TestWithParam<std::string> {};

TEST_P(Additivity, BasePlusAttributionsEqualsPrediction) {
  const auto d = testutil::synthetic_encoded(7, 150);
  const std::string name = GetParam();
  auto cfg = LearnerConfig::from_name(name);
  if (!cfg.stacked()) cfg = cfg.with({{"n_estimators", 40}});
  else
    for (auto& m : cfg.models) m = with_params(m, {{"n_estimators", 30}});
  const auto fitted = fit_learner(d.X, d.y, d.feature_names, cfg, {}, 3);
  const auto Z = fitted.pipeline.apply(d.X);
  const auto rows = shuffled_indices(Z.rows(), 9);
  const auto probe = Z.select_rows(std::vector<std::size_t>(rows.begin(), rows.begin() + 100));
  const auto s = tree_shap(fitted.model, probe, Z);
  for (std::size_t r = 0; r < probe.rows(); ++r) {
    EXPECT_NEAR(s.base_value + row_sum(s, r), s.predictions[r], 1e-8);
    EXPECT_NEAR(s.predictions[r], predict_one(fitted.model, probe.row(r)), 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Models, Additivity, ::testing::Values("et", "gb", "xgb", "hm4"));

TEST(TreeShap, StackedViewComposesMetaWeights) {
  StackingModel m;
  m.n_features = 2;
  GradientBoostingModel gb;
  gb.n_features = 2;
  gb.base_prediction = 1.0;
  gb.params.learning_rate = 0.5;
  gb.stages = {stump(0, -2.0, 2.0)};
  ExtraTreesModel et;
  et.n_features = 2;
  et.trees = {stump(1, 0.0, 4.0), stump(1, 0.0, 2.0)};
  m.bases = {gb, et};
  m.meta.weights = {2.0, 0.5};
  m.meta.intercept = -1.0;
  const TrainedModel tm = m;
  const auto view = tree_view(tm);
  EXPECT_DOUBLE_EQ(view.bias, -1.0 + 2.0 * 1.0);
  ASSERT_EQ(view.trees.size(), 3u);
  EXPECT_DOUBLE_EQ(view.trees[0].second, 1.0);
  EXPECT_DOUBLE_EQ(view.trees[1].second, 0.25);
  const std::vector<double> x{0.9, 0.9};
  EXPECT_DOUBLE_EQ(view.predict(x), m.predict(x));
}

TEST(BruteForce, ConstantModelGivesZeros) {
  const std::vector<RegressionTree> trees{RegressionTree::leaf(3.0, 10.0)};
  const auto view = view_of(trees, 3);
  for (double v : brute_force_shapley(view, std::vector<double>{0.1, 0.2, 0.3})) EXPECT_EQ(v, 0.0);
  const auto s = tree_shap(view, Matrix::from_rows({{0.1, 0.2, 0.3}}), Matrix(1, 3));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(s.values(0, j), 0.0);
  EXPECT_EQ(s.base_value, 3.0);
}

TEST(BruteForce, SinglePlayerGetsEverything) {
  const std::vector<RegressionTree> trees{stump(0, 2.0, 6.0, 25, 75)};
  const auto view = view_of(trees, 1);
  const std::vector<double> x{0.9};
  const double base = expected_value(view);
  EXPECT_DOUBLE_EQ(base, 5.0);
  EXPECT_NEAR(brute_force_shapley(view, x)[0], view.predict(x) - base, 1e-15);
}

TEST(BruteForce, SymmetricSumSplitsEvenly) {
  // f = x1 + x2 for binary inputs, once as two stumps and once as one
  // depth-2 tree; the background is i.i.d. (equal covers on both sides).
  const std::vector<RegressionTree> stumps{stump(0, 0.0, 1.0), stump(1, 0.0, 1.0)};
  const std::vector<RegressionTree> joint{RegressionTree({split(0, 0.5, 1, 2, 100), split(1, 0.5, 3, 4, 50),
                                                          split(1, 0.5, 5, 6, 50), leaf(0.0, 25), leaf(1.0, 25),
                                                          leaf(1.0, 25), leaf(2.0, 25)})};
  for (const auto* trees : {&stumps, &joint}) {
    const auto view = view_of(*trees, 2);
    for (const auto& x : {std::vector<double>{1.0, 1.0}, std::vector<double>{0.0, 0.0}}) {
      const auto bf = brute_force_shapley(view, x);
      EXPECT_NEAR(bf[0], bf[1], 1e-9);
      const auto s = tree_shap(view, Matrix::from_rows({x}), Matrix::from_rows({x}));
      EXPECT_NEAR(s.values(0, 0), s.values(0, 1), 1e-9);
      EXPECT_NEAR(s.values(0, 0), bf[0], 1e-12);
    }
  }
}

TEST(BruteForce, RefusesWideInputs) {
  const std::vector<RegressionTree> trees{stump(0, 0.0, 1.0)};
  const auto view = view_of(trees, 13);
  EXPECT_THROW(brute_force_shapley(view, std::vector<double>(13, 0.0)), ConfigError);
  EXPECT_NO_THROW(brute_force_shapley(view_of(trees, 12), std::vector<double>(12, 0.0)));
}

TEST(TreeShap, UnsupportedAndInvalidInputs) {
  const TrainedModel mean = Regressor{MeanModel{1.0, 2}};
  EXPECT_THROW(tree_view(mean), UnsupportedModelError);
  const std::vector<RegressionTree> trees{stump(0, 0.0, 1.0)};
  const auto view = view_of(trees, 2);
  EXPECT_THROW(tree_shap(view, Matrix(1, 3), Matrix(1, 3)), ModelError);
  EXPECT_THROW(tree_shap(view, Matrix(1, 2), Matrix(0, 2)), DataError);
}

TEST(TreeShap, WorkerCountDoesNotChangeValues) {
  Rng rng(8);
  std::vector<RegressionTree> trees;
  for (int t = 0; t < 6; ++t) trees.push_back(random_tree(4, 5, rng));
  const auto view = view_of(trees, 5, 1.0 / 6.0);
  const auto X = testutil::random_matrix(40, 5, 9);
  EXPECT_EQ(tree_shap(view, X, X, 1).values.data(), tree_shap(view, X, X, 3).values.data());
}
