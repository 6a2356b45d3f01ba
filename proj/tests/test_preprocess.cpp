#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_util.hpp"

using namespace uplift;

TEST(YeoJohnson, BranchExamples) {
  const double e = std::numbers::e;
  EXPECT_NEAR(yeo_johnson(5, 1), 5.0, 1e-12);
  EXPECT_NEAR(yeo_johnson(-5, 1), -5.0, 1e-12);
  EXPECT_NEAR(yeo_johnson(e - 1, 0), 1.0, 1e-12);
  EXPECT_NEAR(yeo_johnson(-(e - 1), 2), -1.0, 1e-12);
}

TEST(YeoJohnson, MatchesDirectFormula) {
  for (double lambda : {-2.0, -0.5, 0.3, 1.5, 2.5})
    for (double x : {-3.0, -0.4, 0.0, 0.7, 4.0}) {
      const double want = x >= 0 ? (std::pow(x + 1, lambda) - 1) / lambda
                                 : -(std::pow(-x + 1, 2 - lambda) - 1) / (2 - lambda);
      EXPECT_NEAR(yeo_johnson(x, lambda), want, 1e-12) << x << " " << lambda;
    }
}

TEST(YeoJohnson, ContinuityAtBranchPoints) {
  for (double lambda : {-3.0, 0.0, 1.0, 2.0, 4.0}) EXPECT_EQ(yeo_johnson(0.0, lambda), 0.0);
  for (double lambda : {1e-6, -1e-6}) {
    for (double x : {0.01, 0.05, 0.1}) EXPECT_NEAR(yeo_johnson(x, lambda), std::log1p(x), 1e-8);
    // Further out the exact transform departs from ln(1+x) by lambda*ln^2(1+x)/2.
    for (double x : {0.5, 3.0, 20.0}) {
      const double l = std::log1p(x);
      EXPECT_NEAR(yeo_johnson(x, lambda), l + lambda * l * l / 2, 1e-10);
    }
  }
}

TEST(YeoJohnson, Monotone) {
  Rng rng(4);
  for (int i = 0; i < 20000; ++i) {
    double a = rng.uniform(-50, 50), b = rng.uniform(-50, 50);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const double lambda = rng.uniform(-5, 5);
    EXPECT_LT(yeo_johnson(a, lambda), yeo_johnson(b, lambda));
  }
}

// Dense grid over the profile likelihood, independent of the optimizer.
double grid_argmax(const std::vector<double>& x) {
  double best = -INFINITY, arg = 0;
  for (int i = -5000; i <= 5000; ++i) {
    const double l = i / 1000.0, ll = yeo_johnson_log_likelihood(x, l);
    if (ll > best) best = ll, arg = l;
  }
  return arg;
}

TEST(FitYeoJohnson, NormalSampleNearIdentity) {
  Rng rng(21);
  std::vector<double> x(500);
  for (auto& v : x) v = 10 + rng.normal();
  const auto fit = fit_yeo_johnson(x);
  EXPECT_NEAR(fit.lambda, 1.0, 0.3);
  EXPECT_NEAR(fit.lambda, grid_argmax(x), 2e-3);
}

TEST(FitYeoJohnson, LogNormalImprovesNormality) {
  Rng rng(22);
  std::vector<double> x(200);
  for (auto& v : x) v = std::exp(rng.normal());
  const auto fit = fit_yeo_johnson(x);
  EXPECT_LT(fit.lambda, 0.5);
  EXPECT_NEAR(fit.lambda, grid_argmax(x), 2e-3);
  std::vector<double> t(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) t[i] = yeo_johnson(x[i], fit.lambda);
  EXPECT_GT(shapiro_wilk_w(t), shapiro_wilk_w(x));
}

TEST(FitYeoJohnson, ConstantColumnDegenerate) {
  const auto fit = fit_yeo_johnson(std::vector<double>{4, 4, 4});
  EXPECT_EQ(fit.lambda, 1.0);
  EXPECT_TRUE(fit.degenerate);
}

// Reference values from an independent implementation of the same
// algorithm (SciPy's shapiro), frozen here.
struct SwCase {
  std::vector<double> x;
  double w, p;
};

TEST(ShapiroWilk, ReferenceVectors) {
  const std::vector<SwCase> cases = {
      {{0.11, 7.87, 4.61, 10.14, 7.95, 3.14, 0.46, 4.43, 0.21, 4.75, 0.71, 1.52, 3.24, 0.93, 0.42, 4.97, 9.53, 4.55,
        0.47, 6.66},
       0.9004728794391273, 0.04208957544308365},
      {{1.36, 1.14, 2.92, 2.55, 1.46, 1.06, 5.27, -1.11, 3.48, 1.10, 0.88, -0.51, 1.46, 0.52, 6.20, 1.69, 0.08, 3.67,
        2.81, 3.49},
       0.9590269459704117, 0.5245979292601223},
      {{148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236}, 0.7888146948631716, 0.006703814061898823},
      {{0.139, 0.157, 0.175, 0.256, 0.344, 0.413, 0.503, 0.577, 0.614, 0.655, 0.954, 1.392, 1.557,
        1.648, 1.690, 1.994, 2.174, 2.206, 3.245, 3.510, 3.571, 4.354, 4.980, 6.084, 8.351},
       0.8346662753381485, 0.0009134904825887374},
      {{1, 2, 4}, 0.9642857142857142, 0.6368868450289689},
      {{1, 2, 3, 4}, 0.9929120069984326, 0.9718770585603881},
      {{1, 2, 3, 5, 8}, 0.9385500656529824, 0.6557061065668559},
  };
  for (const auto& c : cases) {
    const auto r = shapiro_wilk(c.x);
    EXPECT_NEAR(r.w, c.w, 1e-6) << c.x.size();
    EXPECT_NEAR(r.p_value, c.p, 1e-4) << c.x.size();
  }
}

TEST(ShapiroWilk, SymmetricThreePoints) { EXPECT_NEAR(shapiro_wilk_w(std::vector<double>{1, 2, 3}), 1.0, 1e-6); }

TEST(ShapiroWilk, Errors) {
  EXPECT_THROW(shapiro_wilk(std::vector<double>{1, 2}), DomainError);
  EXPECT_THROW(shapiro_wilk(std::vector<double>(5001, 1.0)), DomainError);
  EXPECT_THROW(shapiro_wilk(std::vector<double>{3, 3, 3, 3}), DomainError);
}

TEST(Polynomial, Terms) {
  EXPECT_EQ(expand_polynomial(std::vector<double>{2, 3, 4}, 0, 1, 2),
            (std::vector<double>{2, 3, 4, 4, 9, 16, 6, 12, 8}));
  const auto z = expand_polynomial(std::vector<double>{0, 0, 0}, 0, 1, 2);
  EXPECT_EQ(std::vector<double>(z.begin() + 3, z.end()), std::vector<double>(6, 0.0));
  const auto o = expand_polynomial(std::vector<double>{1, 1, 1}, 0, 1, 2);
  EXPECT_EQ(std::vector<double>(o.begin() + 3, o.end()), std::vector<double>(6, 1.0));
  EXPECT_EQ(PolySpec::term_names().size(), 6u);
}

TEST(Standardize, Examples) {
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(standardize(1, 2, s), -1.224744871391589, 1e-12);
  EXPECT_EQ(standardize(2, 2, s), 0.0);
  EXPECT_EQ(standardize(7, 7, 0.0), 0.0);
  EXPECT_EQ(standardize(9, 7, 0.0), 0.0);
}

TEST(Pipeline, DisabledStagesAreIdentity) {
  const auto d = testutil::synthetic_encoded(1, 50);
  const auto p = fit_pipeline(d.X, d.feature_names, PipelineStages::none());
  EXPECT_EQ(p.apply(d.X), d.X);
  EXPECT_EQ(p.feature_names_out, d.feature_names);
}

TEST(Pipeline, TrainColumnsStandardized) {
  const auto d = testutil::synthetic_encoded(2, 120);
  const auto split = train_test_split(d.size(), 0.7, 3);
  const auto train = d.subset(split.train), test = d.subset(split.test);
  const auto p = fit_pipeline(train.X, d.feature_names);
  const auto Z = p.apply(train.X);
  EXPECT_EQ(Z.cols(), d.X.cols() + 6);
  bool some_test_mean_nonzero = false;
  const auto Zt = p.apply(test.X);
  for (std::size_t j = 0; j < Z.cols(); ++j) {
    const auto col = Z.column(j);
    double m = 0, ss = 0;
    for (double v : col) m += v;
    m /= static_cast<double>(col.size());
    for (double v : col) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(col.size()));
    EXPECT_LT(std::abs(m), 1e-10) << p.feature_names_out[j];
    if (p.stds[j] > 0) EXPECT_NEAR(sd, 1.0, 1e-10) << p.feature_names_out[j];
    double mt = 0;
    for (double v : Zt.column(j)) mt += v;
    if (std::abs(mt / static_cast<double>(Zt.rows())) > 1e-3) some_test_mean_nonzero = true;
  }
  EXPECT_TRUE(some_test_mean_nonzero);
}

TEST(Pipeline, ConstantColumnScalesToZero) {
  Matrix X = testutil::random_matrix(30, 24, 5);
  for (std::size_t r = 0; r < X.rows(); ++r) X(r, 0) = 4.0;
  const auto p = fit_pipeline(X, encoded_feature_names());
  EXPECT_EQ(p.stds[0], 0.0);
  for (double v : p.apply(X).column(0)) EXPECT_EQ(v, 0.0);
}

TEST(Pipeline, PolynomialUsesTransformedBase) {
  const auto d = testutil::synthetic_encoded(3, 80);
  PipelineStages st{true, true, false};
  const auto p = fit_pipeline(d.X, d.feature_names, st);
  const auto z = p.apply_row(d.X.row(0));
  const std::size_t P = *encoded_index("power_w"), T = *encoded_index("plasma_time_s");
  EXPECT_DOUBLE_EQ(z[kEncodedWidth + 0], z[P] * z[P]);
  EXPECT_DOUBLE_EQ(z[kEncodedWidth + 3], z[P] * z[T]);
  EXPECT_EQ(p.feature_names_out[kEncodedWidth + 3], "power_w*plasma_time_s");
}

TEST(Pipeline, DeterministicAndErrors) {
  const auto d = testutil::synthetic_encoded(4, 60);
  EXPECT_EQ(fit_pipeline(d.X, d.feature_names), fit_pipeline(d.X, d.feature_names));
  FittedPipeline unfitted;
  EXPECT_THROW(unfitted.apply(d.X), ModelError);
  const auto p = fit_pipeline(d.X, d.feature_names);
  EXPECT_THROW(p.apply_row(std::vector<double>(3, 0.0)), ModelError);
}

TEST(Pipeline, SelectionKeepsColumns) {
  const auto d = testutil::synthetic_encoded(5, 60);
  const auto p = fit_pipeline(d.X, d.feature_names);
  const std::vector<std::size_t> keep = {12, 25};
  const auto q = p.with_selection(keep);
  const auto full = p.apply_row(d.X.row(3)), part = q.apply_row(d.X.row(3));
  ASSERT_EQ(part.size(), 2u);
  EXPECT_EQ(part[0], full[12]);
  EXPECT_EQ(part[1], full[25]);
  EXPECT_EQ(q.feature_names_out[1], p.feature_names_out[25]);
}
