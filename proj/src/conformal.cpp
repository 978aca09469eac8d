#include "pimeta/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pimeta/rng.hpp"

namespace pimeta {

ConformalModel::ConformalModel(PointPredictor center, double offset,
                               std::string label)
    : center_(std::move(center)), offset_(offset), label_(std::move(label)) {}

ConformalModel::ConformalModel(QuantilePredictor quantiles, double offset,
                               std::string label)
    : quantiles_(std::move(quantiles)),
      offset_(offset),
      label_(std::move(label)) {}

Interval ConformalModel::eval(const std::vector<double>& x) const {
  if (center_) {
    const double mu = center_(x);
    return {mu - offset_, mu + offset_};
  }
  double lo = quantiles_.lower(x);
  double hi = quantiles_.upper(x);
  if (lo > hi) std::swap(lo, hi);
  return {lo - offset_, hi + offset_};
}

bool ConformalModel::infinite_width() const {
  return std::isinf(offset_);
}

namespace {

struct SplitParts {
  ReplicatedDataset fit_part;          // D1
  std::vector<std::vector<double>> calib_x;  // x_i for i in I2
  std::vector<double> calib_y;         // y_{i,1} for i in I2
};

// Alg. step 1. With full replication, I2 covers every point, the scored
// replicate is index 1 and the base model trains on the rest; with any
// single-replicate point the data are split 50/50 at point level instead.
SplitParts conformal_split(const ReplicatedDataset& train, std::uint64_t seed) {
  train.validate();
  if (train.size() == 0)
    throw std::invalid_argument("conformal: empty training data");
  const bool all_multi =
      std::all_of(train.replications.begin(), train.replications.end(),
                  [](const auto& r) { return r.size() >= 2; });

  SplitParts parts;
  if (all_multi) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      parts.calib_x.push_back(train.points[i]);
      parts.calib_y.push_back(train.replications[i].front());
      parts.fit_part.points.push_back(train.points[i]);
      parts.fit_part.replications.emplace_back(
          train.replications[i].begin() + 1, train.replications[i].end());
    }
  } else {
    if (train.size() < 2)
      throw std::invalid_argument(
          "conformal: need >= 2 points to split single-replicate data");
    auto [fit, calib] = split_disjoint(train, 0.5, seed);
    parts.fit_part = std::move(fit);
    for (std::size_t i = 0; i < calib.size(); ++i) {
      parts.calib_x.push_back(calib.points[i]);
      parts.calib_y.push_back(calib.replications[i].front());
    }
  }
  if (parts.calib_y.empty())
    throw std::invalid_argument("conformal: empty calibration set");
  return parts;
}

double conformal_offset(std::vector<double> scores, double alpha) {
  const double s = static_cast<double>(scores.size());
  return empirical_quantile(std::move(scores),
                            (1.0 - alpha) * (1.0 + 1.0 / s));
}

}  // namespace

std::shared_ptr<ConformalModel> split_conformal(const ReplicatedDataset& train,
                                                const BaseRegressor& base,
                                                double alpha,
                                                std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("conformal: alpha must lie in (0,1)");
  SplitParts parts = conformal_split(train, derive_seed(seed, 1));
  PointPredictor mu = base(parts.fit_part, derive_seed(seed, 2));

  std::vector<double> residuals;
  residuals.reserve(parts.calib_y.size());
  for (std::size_t i = 0; i < parts.calib_y.size(); ++i)
    residuals.push_back(std::abs(parts.calib_y[i] - mu(parts.calib_x[i])));
  const double q = conformal_offset(std::move(residuals), alpha);

  // A degenerate quantile (too few calibration points for this alpha)
  // yields +inf half-width; infinite_width() flags it for callers.
  return std::make_shared<ConformalModel>(
      std::move(mu), q, "SCP(alpha=" + std::to_string(alpha) + ")");
}

std::shared_ptr<ConformalModel> split_cqr(const ReplicatedDataset& train,
                                          const BaseQuantileRegressor& base,
                                          double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("conformal: alpha must lie in (0,1)");
  SplitParts parts = conformal_split(train, derive_seed(seed, 1));
  QuantilePredictor q =
      base(parts.fit_part, alpha / 2.0, 1.0 - alpha / 2.0, derive_seed(seed, 2));

  std::vector<double> scores;
  scores.reserve(parts.calib_y.size());
  for (std::size_t i = 0; i < parts.calib_y.size(); ++i) {
    double lo = q.lower(parts.calib_x[i]);
    double hi = q.upper(parts.calib_x[i]);
    if (lo > hi) std::swap(lo, hi);
    const double y = parts.calib_y[i];
    scores.push_back(std::max(lo - y, y - hi));
  }
  const double offset = conformal_offset(std::move(scores), alpha);

  return std::make_shared<ConformalModel>(
      std::move(q), offset, "SCQR(alpha=" + std::to_string(alpha) + ")");
}

}  // namespace pimeta
