#pragma once

#include <cstdint>
#include <vector>

#include "pimeta/conformal.hpp"
#include "pimeta/dataset.hpp"

namespace pimeta {

struct QRFConfig {
  int n_trees = 100;
  int min_leaf = 5;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

// Quantile regression forest: CART trees grown on bootstrap samples with
// variance-reduction splits; every leaf keeps its member responses, and
// prediction reads quantiles off the tree-averaged weighted empirical CDF
// (left-continuous inverse).
class QRFModel {
 public:
  // Smallest response value whose weighted CDF at x reaches q.
  double quantile(const std::vector<double>& x, double q) const;
  // [q_{alpha/2}, q_{1-alpha/2}] with a swap guard.
  Interval interval(const std::vector<double>& x, double alpha) const;

  int tree_count() const { return static_cast<int>(trees_.size()); }

 private:
  struct Node {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf: range into the tree's sample indices
  };
  struct Tree {
    std::vector<Node> nodes;
    std::vector<int> samples;  // bootstrap sample indices, leaf-partitioned
  };

  int leaf_of(const Tree& tree, const std::vector<double>& x) const;

  std::vector<Tree> trees_;
  std::vector<std::vector<double>> xs_;
  std::vector<double> ys_;
  QRFConfig cfg_;

  friend QRFModel fit_qrf(const std::vector<std::vector<double>>& xs,
                          const std::vector<double>& ys,
                          const QRFConfig& cfg);
};

// Requires at least 2*min_leaf samples. Deterministic given cfg.seed.
QRFModel fit_qrf(const std::vector<std::vector<double>>& xs,
                 const std::vector<double>& ys, const QRFConfig& cfg);

// IntervalModel adapter for direct use as a baseline method.
class QRFIntervalModel final : public IntervalModel {
 public:
  QRFIntervalModel(QRFModel model, double alpha)
      : model_(std::move(model)), alpha_(alpha) {}
  Interval eval(const std::vector<double>& x) const override {
    return model_.interval(x, alpha_);
  }
  std::string label() const override;

 private:
  QRFModel model_;
  double alpha_;
};

// Base quantile regressor for split CQR: flattens the fit data and trains
// one forest, answering both requested levels from it.
BaseQuantileRegressor qrf_base_quantile(const QRFConfig& cfg);

}  // namespace pimeta
