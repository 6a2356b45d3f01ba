#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "uplift/error.hpp"
#include "uplift/matrix.hpp"
#include "uplift/parallel.hpp"
#include "uplift/rng.hpp"

namespace uplift {

// "max_depth: None" means grow until the sample-count rules stop.
inline constexpr std::size_t kUnboundedDepth = 2147483647;

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left iff x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // leaf output
  double cover = 0.0;  // training rows (hessian mass) reaching the node

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

// Binary regression tree stored as a flat node array; node 0 is the root.
class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  static RegressionTree leaf(double value, double cover = 1.0) {
    TreeNode n;
    n.value = value;
    n.cover = cover;
    return RegressionTree({n});
  }

  std::size_t leaf_index(std::span<const double> x) const noexcept {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return i;
  }

  double predict(std::span<const double> x) const noexcept { return nodes_[leaf_index(x)].value; }

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes_[i].is_leaf()) {
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes_[i].right), d + 1);
      }
    }
    return best;
  }

  /// Structural sanity: children in range, exactly two per internal node, finite leaves.
  void validate(std::size_t n_features) const {
    if (nodes_.empty()) throw ModelError("tree has no nodes");
    for (const auto& n : nodes_) {
      if (n.is_leaf()) {
        if (!std::isfinite(n.value)) throw ModelError("non-finite leaf value");
        continue;
      }
      const auto sz = static_cast<std::int32_t>(nodes_.size());
      if (n.left <= 0 || n.right <= 0 || n.left >= sz || n.right >= sz || n.left == n.right)
        throw ModelError("tree node has invalid children");
      if (static_cast<std::size_t>(n.feature) >= n_features) throw ModelError("tree split feature out of range");
    }
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

/// Rows sorted lexicographically by (features, target). Fitting on this order
/// makes every model independent of the caller's row order.
inline std::vector<std::size_t> canonical_order(const Matrix& X, std::span<const double> y) {
  std::vector<std::size_t> idx(X.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = X.row(a), rb = X.row(b);
    for (std::size_t j = 0; j < ra.size(); ++j)
      if (ra[j] != rb[j]) return ra[j] < rb[j];
    return y[a] < y[b];
  });
  return idx;
}

struct RandomizedTreeParams {
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;  // candidates per node, 0 = all
  std::size_t max_depth = kUnboundedDepth;
};

namespace detail {

struct PendingNode {
  std::size_t node;
  std::size_t begin;
  std::size_t end;
  std::size_t depth;
};

}  // namespace detail

/// Extremely randomized tree on all rows: one uniform threshold per candidate
/// feature, best candidate by children's summed squared error.
inline RegressionTree build_randomized_tree(const Matrix& X, std::span<const double> y,
                                            const RandomizedTreeParams& params, std::uint64_t seed) {
  const std::size_t n = X.rows(), p = X.cols();
  if (n == 0) throw DataError("cannot grow a tree on zero rows");
  Rng rng(seed);
  const std::size_t n_candidates = (params.max_features == 0 || params.max_features > p) ? p : params.max_features;
  const std::size_t min_leaf = std::max<std::size_t>(1, params.min_samples_leaf);

  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<TreeNode> nodes(1);
  std::vector<detail::PendingNode> stack{{0, 0, n, 0}};

  while (!stack.empty()) {
    const auto job = stack.back();
    stack.pop_back();
    const std::size_t m = job.end - job.begin;
    const auto node_rows = std::span<std::size_t>(rows).subspan(job.begin, m);

    double sum = 0.0, ymin = y[node_rows[0]], ymax = ymin;
    for (std::size_t r : node_rows) {
      sum += y[r];
      ymin = std::min(ymin, y[r]);
      ymax = std::max(ymax, y[r]);
    }
    nodes[job.node].value = sum / static_cast<double>(m);
    nodes[job.node].cover = static_cast<double>(m);
    if (m < params.min_samples_split || m < 2 * min_leaf || ymin == ymax || job.depth >= params.max_depth) continue;

    auto candidates = sample_without_replacement(p, n_candidates, rng);
    std::sort(candidates.begin(), candidates.end());
    bool found = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t f : candidates) {
      double lo = X(node_rows[0], f), hi = lo;
      for (std::size_t r : node_rows) {
        lo = std::min(lo, X(r, f));
        hi = std::max(hi, X(r, f));
      }
      if (lo == hi) continue;
      double threshold = lo + rng.uniform() * (hi - lo);
      if (!(threshold > lo && threshold < hi)) threshold = lo + 0.5 * (hi - lo);
      if (!(threshold > lo && threshold < hi)) continue;
      double sum_left = 0.0;
      std::size_t n_left = 0;
      for (std::size_t r : node_rows) {
        if (X(r, f) <= threshold) {
          sum_left += y[r];
          ++n_left;
        }
      }
      const std::size_t n_right = m - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double sum_right = sum - sum_left;
      // Minimizing children SSE == maximizing sum^2/count over children.
      const double score = sum_left * sum_left / static_cast<double>(n_left) +
                           sum_right * sum_right / static_cast<double>(n_right);
      if (score > best_score) {
        best_score = score;
        best_feature = f;
        best_threshold = threshold;
        found = true;
      }
    }
    if (!found) continue;

    auto mid = std::stable_partition(node_rows.begin(), node_rows.end(),
                                     [&](std::size_t r) { return X(r, best_feature) <= best_threshold; });
    const std::size_t split = job.begin + static_cast<std::size_t>(mid - node_rows.begin());
    const auto left = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    auto& parent = nodes[job.node];
    parent.feature = static_cast<std::int32_t>(best_feature);
    parent.threshold = best_threshold;
    parent.left = left;
    parent.right = left + 1;
    stack.push_back({static_cast<std::size_t>(left + 1), split, job.end, job.depth + 1});
    stack.push_back({static_cast<std::size_t>(left), job.begin, split, job.depth + 1});
  }
  return RegressionTree(std::move(nodes));
}

struct GradientTreeParams {
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = kUnboundedDepth;
  double l2_leaf = 0.0;           // lambda
  double gamma = 0.0;             // minimum split gain
  double min_child_weight = 0.0;  // minimum hessian mass per child
  std::size_t workers = 1;
};

/// Exhaustive greedy tree on gradient statistics (hessian = 1, squared loss).
/// Split gain = 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma and a
/// split is kept only when the gain is positive; leaf value = -G / (H + l).
/// With l = 0 and gamma = 0 this is a variance-reduction CART tree fitted to
/// the negative gradients. `rows` and `features` restrict the sample.
inline RegressionTree build_gradient_tree(const Matrix& X, std::span<const double> grad,
                                          std::span<const std::size_t> rows,
                                          std::span<const std::size_t> features,
                                          const GradientTreeParams& params) {
  const std::size_t n = rows.size();
  if (n == 0) throw DataError("cannot grow a tree on zero rows");
  const std::size_t min_leaf = std::max<std::size_t>(1, params.min_samples_leaf);
  const double lambda = params.l2_leaf;

  // Per-feature row lists sorted by value; ties keep canonical row order.
  std::vector<std::vector<std::size_t>> sorted(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) {
    auto& s = sorted[k];
    s.assign(rows.begin(), rows.end());
    const std::size_t f = features[k];
    std::stable_sort(s.begin(), s.end(), [&](std::size_t a, std::size_t b) { return X(a, f) < X(b, f); });
  }
  std::vector<char> goes_left(X.rows(), 0);

  struct Job {
    std::size_t node, begin, end, depth;
  };
  std::vector<TreeNode> nodes(1);
  std::vector<Job> stack{{0, 0, n, 0}};

  struct Candidate {
    double gain = -std::numeric_limits<double>::infinity();
    std::size_t position = 0;  // rows [begin, begin + position) go left
    double threshold = 0.0;
  };
  std::vector<Candidate> per_feature(features.size());

  while (!stack.empty()) {
    const Job job = stack.back();
    stack.pop_back();
    const std::size_t m = job.end - job.begin;
    double G = 0.0;
    const auto& first_list = sorted.empty() ? std::vector<std::size_t>(rows.begin(), rows.end()) : sorted[0];
    for (std::size_t i = job.begin; i < job.end; ++i) G += grad[first_list[i]];
    const double H = static_cast<double>(m);
    nodes[job.node].value = -G / (H + lambda);
    nodes[job.node].cover = H;
    if (m < params.min_samples_split || m < 2 * min_leaf || job.depth >= params.max_depth || features.empty()) continue;

    const double parent_term = G * G / (H + lambda);
    auto scan = [&](std::size_t k) {
      const auto& s = sorted[k];
      const std::size_t f = features[k];
      Candidate best;
      double gl = 0.0;
      for (std::size_t i = job.begin; i + 1 < job.end; ++i) {
        gl += grad[s[i]];
        const std::size_t nl = i + 1 - job.begin;
        const std::size_t nr = m - nl;
        const double xl = X(s[i], f), xr = X(s[i + 1], f);
        if (xl == xr || nl < min_leaf || nr < min_leaf) continue;
        const double hl = static_cast<double>(nl), hr = static_cast<double>(nr);
        if (hl < params.min_child_weight || hr < params.min_child_weight) continue;
        const double gr = G - gl;
        const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_term) - params.gamma;
        if (gain > best.gain) {
          best.gain = gain;
          best.position = nl;
          double t = xl + 0.5 * (xr - xl);
          if (!(t >= xl && t < xr)) t = xl;
          best.threshold = t;
        }
      }
      per_feature[k] = best;
    };
    const bool wide = params.workers > 1 && m * features.size() >= 20000;
    parallel_for(features.size(), wide ? params.workers : 1, scan);

    std::size_t best_k = features.size();
    double best_gain = 0.0;
    for (std::size_t k = 0; k < features.size(); ++k) {
      // Gain must be positive; the relative floor absorbs rounding noise.
      const double floor = 1e-12 * (parent_term + 1.0);
      if (per_feature[k].gain > floor && (best_k == features.size() || per_feature[k].gain > best_gain)) {
        best_gain = per_feature[k].gain;
        best_k = k;
      }
    }
    if (best_k == features.size()) continue;

    const Candidate& c = per_feature[best_k];
    const std::size_t f = features[best_k];
    for (std::size_t i = job.begin; i < job.end; ++i) goes_left[sorted[best_k][i]] = (X(sorted[best_k][i], f) <= c.threshold);
    for (auto& s : sorted)
      std::stable_partition(s.begin() + static_cast<std::ptrdiff_t>(job.begin), s.begin() + static_cast<std::ptrdiff_t>(job.end),
                            [&](std::size_t r) { return goes_left[r] != 0; });
    const std::size_t split = job.begin + c.position;
    const auto left = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    auto& parent = nodes[job.node];
    parent.feature = static_cast<std::int32_t>(f);
    parent.threshold = c.threshold;
    parent.left = left;
    parent.right = left + 1;
    stack.push_back({static_cast<std::size_t>(left + 1), split, job.end, job.depth + 1});
    stack.push_back({static_cast<std::size_t>(left), job.begin, split, job.depth + 1});
  }
  return RegressionTree(std::move(nodes));
}

}  // namespace uplift
