#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/learner.hpp"
#include "uplift/matrix.hpp"
#include "uplift/parallel.hpp"
#include "uplift/tree.hpp"

namespace uplift {

// Any supported model flattened to: bias + sum_k weight_k * tree_k(x).
struct TreeEnsembleView {
  double bias = 0.0;
  std::vector<std::pair<const RegressionTree*, double>> trees;
  std::size_t n_features = 0;

  double predict(std::span<const double> x) const {
    double s = bias;
    for (const auto& [t, w] : trees) s += w * t->predict(x);
    return s;
  }
};

inline TreeEnsembleView tree_view(const Regressor& m) {
  TreeEnsembleView v;
  std::visit(
      [&](const auto& model) {
        using M = std::decay_t<decltype(model)>;
        v.n_features = model.n_features;
        if constexpr (std::is_same_v<M, MeanModel>) {
          throw UnsupportedModelError("SHAP attribution needs a tree-based model");
        } else if constexpr (std::is_same_v<M, ExtraTreesModel>) {
          const double w = 1.0 / static_cast<double>(model.trees.size());
          for (const auto& t : model.trees) v.trees.emplace_back(&t, w);
        } else {
          v.bias = model.base_prediction;
          for (const auto& t : model.stages) v.trees.emplace_back(&t, model.params.learning_rate);
        }
      },
      m);
  return v;
}

/// Stacked models are linear in their base predictions, so their view is the
/// meta-weighted union of the base views.
inline TreeEnsembleView tree_view(const TrainedModel& m) {
  if (const auto* r = std::get_if<Regressor>(&m)) return tree_view(*r);
  const auto& s = std::get<StackingModel>(m);
  TreeEnsembleView v;
  v.n_features = s.n_features;
  v.bias = s.meta.intercept;
  for (std::size_t b = 0; b < s.bases.size(); ++b) {
    const auto base = tree_view(s.bases[b]);
    const double w = s.meta.weights[b];
    v.bias += w * base.bias;
    for (const auto& [t, tw] : base.trees) v.trees.emplace_back(t, w * tw);
  }
  return v;
}

/// Cover-weighted mean leaf value, E[tree(X)] under the training distribution.
inline double expected_value(const RegressionTree& tree) {
  const auto& nodes = tree.nodes();
  double s = 0.0;
  for (const auto& n : nodes)
    if (n.is_leaf()) s += n.cover * n.value;
  return s / nodes[0].cover;
}

inline double expected_value(const TreeEnsembleView& view) {
  double s = view.bias;
  for (const auto& [t, w] : view.trees) s += w * expected_value(*t);
  return s;
}

namespace detail {

struct PathElement {
  std::int32_t feature;
  double zero_fraction;
  double one_fraction;
  double weight;
};

inline void extend_path(std::vector<PathElement>& path, double zero, double one, std::int32_t feature) {
  const std::size_t d = path.size();
  path.push_back({feature, zero, one, d == 0 ? 1.0 : 0.0});
  const double dp1 = static_cast<double>(d + 1);
  for (std::size_t i = d; i-- > 0;) {
    path[i + 1].weight += one * path[i].weight * static_cast<double>(i + 1) / dp1;
    path[i].weight = zero * path[i].weight * static_cast<double>(d - i) / dp1;
  }
}

inline void unwind_path(std::vector<PathElement>& path, std::size_t index) {
  const std::size_t d = path.size() - 1;
  const double one = path[index].one_fraction, zero = path[index].zero_fraction;
  const double dp1 = static_cast<double>(d + 1);
  double next = path[d].weight;
  for (std::size_t i = d; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * dp1 / (static_cast<double>(i + 1) * one);
      next = tmp - path[i].weight * zero * static_cast<double>(d - i) / dp1;
    } else {
      path[i].weight = path[i].weight * dp1 / (zero * static_cast<double>(d - i));
    }
  }
  for (std::size_t i = index; i < d; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
  path.pop_back();
}

inline double unwound_path_sum(const std::vector<PathElement>& path, std::size_t index) {
  const std::size_t d = path.size() - 1;
  const double one = path[index].one_fraction, zero = path[index].zero_fraction;
  const double dp1 = static_cast<double>(d + 1);
  double next = path[d].weight, total = 0.0;
  for (std::size_t i = d; i-- > 0;) {
    if (one != 0.0) {
      const double tmp = next * dp1 / (static_cast<double>(i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * static_cast<double>(d - i) / dp1;
    } else {
      total += path[i].weight * dp1 / (zero * static_cast<double>(d - i));
    }
  }
  return total;
}

inline void tree_shap_recurse(const RegressionTree& tree, std::span<const double> x, std::span<double> phi,
                              double scale, std::size_t node, std::vector<PathElement> path, double zero,
                              double one, std::int32_t feature) {
  const auto& nodes = tree.nodes();
  extend_path(path, zero, one, feature);
  const auto& n = nodes[node];
  if (n.is_leaf()) {
    for (std::size_t i = 1; i < path.size(); ++i) {
      const double w = unwound_path_sum(path, i);
      phi[static_cast<std::size_t>(path[i].feature)] +=
          w * (path[i].one_fraction - path[i].zero_fraction) * n.value * scale;
    }
    return;
  }
  const auto f = static_cast<std::size_t>(n.feature);
  const std::size_t hot = static_cast<std::size_t>(x[f] <= n.threshold ? n.left : n.right);
  const std::size_t cold = static_cast<std::size_t>(x[f] <= n.threshold ? n.right : n.left);
  if (!(n.cover > 0.0)) throw ModelError("tree node with zero cover");

  double incoming_zero = 1.0, incoming_one = 1.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    if (path[k].feature == n.feature) {
      incoming_zero = path[k].zero_fraction;
      incoming_one = path[k].one_fraction;
      unwind_path(path, k);
      break;
    }
  }
  tree_shap_recurse(tree, x, phi, scale, hot, path, incoming_zero * nodes[hot].cover / n.cover, incoming_one, n.feature);
  tree_shap_recurse(tree, x, phi, scale, cold, path, incoming_zero * nodes[cold].cover / n.cover, 0.0, n.feature);
}

}  // namespace detail

/// Adds scale * (path-dependent Shapley values of one tree at x) into phi.
inline void tree_shap_accumulate(const RegressionTree& tree, std::span<const double> x, std::span<double> phi,
                                 double scale = 1.0) {
  if (tree.nodes().front().is_leaf()) return;
  detail::tree_shap_recurse(tree, x, phi, scale, 0, {}, 1.0, 1.0, -1);
}

struct ShapMatrix {
  Matrix values;              // rows x features
  double base_value = 0.0;    // E[f] under the trees' training covers
  double background_mean = 0.0;  // mean model output over the background rows
  std::vector<double> predictions;
};

/// Exact path-dependent Shapley values for every row of X (model-input
/// space). base_value + row sum = prediction for each row.
inline ShapMatrix tree_shap(const TreeEnsembleView& view, const Matrix& X, const Matrix& background,
                            std::size_t workers = 1) {
  if (X.cols() != view.n_features) throw ModelError("SHAP input width does not match the model");
  if (background.rows() == 0) throw DataError("SHAP background sample is empty");
  ShapMatrix out;
  out.values = Matrix(X.rows(), X.cols(), 0.0);
  out.predictions.resize(X.rows());
  out.base_value = expected_value(view);
  double bg = 0.0;
  for (std::size_t r = 0; r < background.rows(); ++r) bg += view.predict(background.row(r));
  out.background_mean = bg / static_cast<double>(background.rows());
  parallel_for(X.rows(), workers, [&](std::size_t r) {
    auto phi = out.values.row_mut(r);
    for (const auto& [t, w] : view.trees) tree_shap_accumulate(*t, X.row(r), phi, w);
    out.predictions[r] = view.predict(X.row(r));
  });
  return out;
}

inline ShapMatrix tree_shap(const TrainedModel& model, const Matrix& X, const Matrix& background,
                            std::size_t workers = 1) {
  return tree_shap(tree_view(model), X, background, workers);
}

namespace detail {

// E[tree(X) | X_S = x_S] with the same cover weighting TreeSHAP uses.
inline double conditional_expectation(const RegressionTree& tree, std::size_t node, std::span<const double> x,
                                      std::uint32_t mask) {
  const auto& n = tree.nodes()[node];
  if (n.is_leaf()) return n.value;
  const auto f = static_cast<std::size_t>(n.feature);
  const auto left = static_cast<std::size_t>(n.left), right = static_cast<std::size_t>(n.right);
  if (mask & (1u << f)) return conditional_expectation(tree, x[f] <= n.threshold ? left : right, x, mask);
  const auto& nodes = tree.nodes();
  return (nodes[left].cover * conditional_expectation(tree, left, x, mask) +
          nodes[right].cover * conditional_expectation(tree, right, x, mask)) /
         n.cover;
}

}  // namespace detail

inline constexpr std::size_t kBruteForceMaxFeatures = 12;

/// Shapley values by enumerating all 2^p coalitions. Test oracle for tree_shap.
inline std::vector<double> brute_force_shapley(const TreeEnsembleView& view, std::span<const double> x) {
  const std::size_t p = view.n_features;
  if (p > kBruteForceMaxFeatures)
    throw ConfigError("brute-force Shapley refuses p=" + std::to_string(p) + " (> 12 features)");
  if (x.size() != p) throw ModelError("input width does not match the model");
  const std::uint32_t full = 1u << p;
  std::vector<double> v(full);
  for (std::uint32_t s = 0; s < full; ++s) {
    double total = view.bias;
    for (const auto& [t, w] : view.trees) total += w * detail::conditional_expectation(*t, 0, x, s);
    v[s] = total;
  }
  std::vector<double> fact(p + 1, 1.0);
  for (std::size_t i = 1; i <= p; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t s = 0; s < full; ++s) {
      if (s & bit) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcount(s));
      const double weight = fact[size] * fact[p - size - 1] / fact[p];
      phi[i] += weight * (v[s | bit] - v[s]);
    }
  }
  return phi;
}

}  // namespace uplift
