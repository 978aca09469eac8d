#include "pimeta/quantile_forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pimeta/rng.hpp"

namespace pimeta {

namespace {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;  // SSE reduction
};

// Best variance-reduction split over all features, honoring min_leaf on
// both sides. Deterministic: features scanned in order, strict improvement
// required, so ties keep the earliest candidate.
SplitChoice best_split(const std::vector<std::vector<double>>& xs,
                       const std::vector<double>& ys,
                       const std::vector<int>& idx, int min_leaf) {
  const auto n = static_cast<int>(idx.size());
  const auto d = static_cast<int>(xs.front().size());
  double total = 0.0, total_sq = 0.0;
  for (int i : idx) {
    total += ys[static_cast<std::size_t>(i)];
    total_sq += ys[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
  }
  const double base_sse = total_sq - total * total / n;

  SplitChoice best;
  std::vector<int> order(idx);
  for (int f = 0; f < d; ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double xa = xs[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)];
      const double xb = xs[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
      return xa != xb ? xa < xb : a < b;
    });
    double left = 0.0, left_sq = 0.0;
    for (int pos = 0; pos < n - 1; ++pos) {
      const double y = ys[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
      left += y;
      left_sq += y * y;
      const int nl = pos + 1;
      const int nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      const double xl =
          xs[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])]
            [static_cast<std::size_t>(f)];
      const double xr =
          xs[static_cast<std::size_t>(order[static_cast<std::size_t>(pos + 1)])]
            [static_cast<std::size_t>(f)];
      if (xl == xr) continue;  // cannot separate equal values
      const double right = total - left;
      const double right_sq = total_sq - left_sq;
      const double sse =
          (left_sq - left * left / nl) + (right_sq - right * right / nr);
      const double reduction = base_sse - sse;
      if (!best.found || reduction > best.score + 1e-12) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (xl + xr);
        best.score = reduction;
      }
    }
  }
  return best;
}

}  // namespace

QRFModel fit_qrf(const std::vector<std::vector<double>>& xs,
                 const std::vector<double>& ys, const QRFConfig& cfg) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("qrf: xs/ys length mismatch");
  if (cfg.n_trees < 1 || cfg.min_leaf < 1)
    throw std::invalid_argument("qrf: n_trees and min_leaf must be >= 1");
  const auto n = static_cast<int>(xs.size());
  // A data set smaller than min_leaf cannot host even a single leaf;
  // between min_leaf and 2*min_leaf the tree is one unsplit leaf.
  if (n < 2 || n < cfg.min_leaf)
    throw std::invalid_argument("qrf: need at least min_leaf samples, got " +
                                std::to_string(n));

  QRFModel model;
  model.xs_ = xs;
  model.ys_ = ys;
  model.cfg_ = cfg;
  model.trees_.resize(static_cast<std::size_t>(cfg.n_trees));

  for (int t = 0; t < cfg.n_trees; ++t) {
    auto& tree = model.trees_[static_cast<std::size_t>(t)];
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> sample;
    sample.reserve(static_cast<std::size_t>(n));
    if (cfg.bootstrap) {
      for (int i = 0; i < n; ++i)
        sample.push_back(static_cast<int>(rng.next_u64() % n));
    } else {
      sample.resize(static_cast<std::size_t>(n));
      std::iota(sample.begin(), sample.end(), 0);
    }
    tree.samples = std::move(sample);

    // Iterative node expansion; each node owns a [begin,end) slice of the
    // tree's sample vector that splits partition in place.
    struct Work {
      int node;
      int begin, end;
    };
    tree.nodes.push_back({});
    tree.nodes[0].begin = 0;
    tree.nodes[0].end = n;
    std::vector<Work> stack{{0, 0, n}};
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      const int count = w.end - w.begin;
      if (count < 2 * cfg.min_leaf) continue;
      std::vector<int> idx(tree.samples.begin() + w.begin,
                           tree.samples.begin() + w.end);
      const SplitChoice split = best_split(xs, ys, idx, cfg.min_leaf);
      if (!split.found) continue;

      const auto mid_it = std::stable_partition(
          tree.samples.begin() + w.begin, tree.samples.begin() + w.end,
          [&](int i) {
            return xs[static_cast<std::size_t>(i)]
                     [static_cast<std::size_t>(split.feature)] <=
                   split.threshold;
          });
      const int mid = static_cast<int>(mid_it - tree.samples.begin());

      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.back().begin = w.begin;
      tree.nodes.back().end = mid;
      const int right = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.back().begin = mid;
      tree.nodes.back().end = w.end;

      auto& parent = tree.nodes[static_cast<std::size_t>(w.node)];
      parent.feature = split.feature;
      parent.threshold = split.threshold;
      parent.left = left;
      parent.right = right;
      stack.push_back({left, w.begin, mid});
      stack.push_back({right, mid, w.end});
    }
  }
  return model;
}

int QRFModel::leaf_of(const Tree& tree, const std::vector<double>& x) const {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = (x[static_cast<std::size_t>(nd.feature)] <= nd.threshold) ? nd.left
                                                                     : nd.right;
  }
  return node;
}

double QRFModel::quantile(const std::vector<double>& x, double q) const {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("qrf: quantile level must lie in (0,1)");
  if (trees_.empty()) throw std::logic_error("qrf: model is empty");

  // Meinshausen weights: each tree spreads 1/T over its leaf members.
  std::vector<std::pair<double, double>> weighted;
  const double tree_w = 1.0 / static_cast<double>(trees_.size());
  for (const auto& tree : trees_) {
    const auto& leaf = tree.nodes[static_cast<std::size_t>(leaf_of(tree, x))];
    const int count = leaf.end - leaf.begin;
    const double w = tree_w / static_cast<double>(count);
    for (int k = leaf.begin; k < leaf.end; ++k) {
      weighted.emplace_back(
          ys_[static_cast<std::size_t>(tree.samples[static_cast<std::size_t>(k)])],
          w);
    }
  }
  std::sort(weighted.begin(), weighted.end());
  double cum = 0.0;
  for (const auto& [y, w] : weighted) {
    cum += w;
    if (cum >= q - 1e-12) return y;
  }
  return weighted.back().first;
}

Interval QRFModel::interval(const std::vector<double>& x, double alpha) const {
  double lo = quantile(x, alpha / 2.0);
  double hi = quantile(x, 1.0 - alpha / 2.0);
  if (lo > hi) std::swap(lo, hi);
  return {lo, hi};
}

std::string QRFIntervalModel::label() const {
  return "QRF(alpha=" + std::to_string(alpha_) + ")";
}

BaseQuantileRegressor qrf_base_quantile(const QRFConfig& cfg) {
  return [cfg](const ReplicatedDataset& fit_data, double lo_level,
               double hi_level, std::uint64_t seed) {
    const FlatData flat = flatten(fit_data);
    QRFConfig used = cfg;
    used.seed = seed;
    auto model = std::make_shared<QRFModel>(fit_qrf(flat.xs, flat.ys, used));
    QuantilePredictor out;
    out.lower = [model, lo_level](const std::vector<double>& x) {
      return model->quantile(x, lo_level);
    };
    out.upper = [model, hi_level](const std::vector<double>& x) {
      return model->quantile(x, hi_level);
    };
    return out;
  };
}

}  // namespace pimeta
