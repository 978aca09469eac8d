#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "pimeta/dataset.hpp"

namespace pimeta {

// A fitted point predictor and the algorithm that produces one. Fits must
// be deterministic given the seed.
using PointPredictor = std::function<double(const std::vector<double>&)>;
using BaseRegressor =
    std::function<PointPredictor(const ReplicatedDataset& fit_data,
                                 std::uint64_t seed)>;

// Paired lower/upper quantile predictors at levels alpha/2 and 1-alpha/2.
struct QuantilePredictor {
  std::function<double(const std::vector<double>&)> lower;
  std::function<double(const std::vector<double>&)> upper;
};
using BaseQuantileRegressor = std::function<QuantilePredictor(
    const ReplicatedDataset& fit_data, double lo_level, double hi_level,
    std::uint64_t seed)>;

// Split conformal interval: base prediction(s) plus a constant conformal
// offset. `infinite_width()` flags the degenerate quantile case where the
// offset is +inf.
class ConformalModel final : public IntervalModel {
 public:
  ConformalModel(PointPredictor center, double offset, std::string label);
  ConformalModel(QuantilePredictor quantiles, double offset,
                 std::string label);
  Interval eval(const std::vector<double>& x) const override;
  std::string label() const override { return label_; }

  double offset() const { return offset_; }
  bool infinite_width() const;

 private:
  PointPredictor center_;        // set for the regression variant
  QuantilePredictor quantiles_;  // set for the quantile variant
  double offset_ = 0.0;
  std::string label_;
};

// Split conformal prediction over replicated designs. With r_i >= 2
// everywhere, the calibration set takes replicate 1 of every point and the
// base model is fit on the remaining replicates; otherwise the points are
// split 50/50. Residual quantile level is (1-alpha)(1 + 1/|I2|).
std::shared_ptr<ConformalModel> split_conformal(const ReplicatedDataset& train,
                                                const BaseRegressor& base,
                                                double alpha,
                                                std::uint64_t seed);

// Split conformalized quantile regression; scores are
// max{q_lo(x_i) - y_i1, y_i1 - q_hi(x_i)} and the offset widens both sides.
std::shared_ptr<ConformalModel> split_cqr(const ReplicatedDataset& train,
                                          const BaseQuantileRegressor& base,
                                          double alpha, std::uint64_t seed);

}  // namespace pimeta
