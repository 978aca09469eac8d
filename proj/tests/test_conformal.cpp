#include <doctest.h>

#include <cmath>

#include "pimeta/conformal.hpp"
#include "pimeta/rng.hpp"

using namespace pimeta;

namespace {

const BaseRegressor kZeroBase = [](const ReplicatedDataset&, std::uint64_t) {
  return PointPredictor([](const std::vector<double>&) { return 0.0; });
};

// Least-squares line through the flattened fit data; deterministic and
// cheap, which keeps the coverage meta-test fast.
const BaseRegressor kLinearBase = [](const ReplicatedDataset& d,
                                     std::uint64_t) {
  const FlatData flat = flatten(d);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(flat.ys.size());
  for (std::size_t i = 0; i < flat.ys.size(); ++i) {
    sx += flat.xs[i][0];
    sy += flat.ys[i];
    sxx += flat.xs[i][0] * flat.xs[i][0];
    sxy += flat.xs[i][0] * flat.ys[i];
  }
  const double denom = n * sxx - sx * sx;
  const double slope = denom != 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  const double inter = (sy - slope * sx) / n;
  return PointPredictor(
      [slope, inter](const std::vector<double>& x) { return inter + slope * x[0]; });
};

ReplicatedDataset linear_noise_data(int n, int reps, Rng& rng) {
  ReplicatedDataset d;
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform();
    d.points.push_back({x});
    std::vector<double> ys;
    for (int r = 0; r < reps; ++r) ys.push_back(2.0 * x + 0.5 * rng.normal());
    d.replications.push_back(ys);
  }
  return d;
}

}  // namespace

TEST_CASE("zero-predictor interval is the residual-quantile band") {
  ReplicatedDataset d;
  for (int i = 0; i < 20; ++i) {
    d.points.push_back({static_cast<double>(i)});
    d.replications.push_back({static_cast<double>(i + 1), -1.0});
  }
  // Calibration uses replicate 1 of every point: residuals |1..20|,
  // level 0.95*(21/20) -> ceil(19.95) = 20th smallest = 20.
  auto model = split_conformal(d, kZeroBase, 0.05, 1);
  CHECK(model->offset() == doctest::Approx(20.0));
  const Interval iv = model->eval({3.0});
  CHECK(iv.lower == doctest::Approx(-20.0));
  CHECK(iv.upper == doctest::Approx(20.0));
  CHECK_FALSE(model->infinite_width());
}

TEST_CASE("nineteen calibration points at alpha 0.05 hit the max residual") {
  ReplicatedDataset d;
  double max_abs = 0.0;
  Rng rng(4);
  for (int i = 0; i < 19; ++i) {
    d.points.push_back({rng.uniform()});
    const double y = rng.normal();
    max_abs = std::max(max_abs, std::abs(y));
    d.replications.push_back({y, rng.normal()});
  }
  auto model = split_conformal(d, kZeroBase, 0.05, 1);
  CHECK(model->offset() == doctest::Approx(max_abs));
}

TEST_CASE("too few calibration points degrade to infinite width") {
  ReplicatedDataset d;
  for (int i = 0; i < 7; ++i) {
    d.points.push_back({static_cast<double>(i)});
    d.replications.push_back({1.0 * i, 2.0 * i});
  }
  auto model = split_conformal(d, kZeroBase, 0.05, 1);
  CHECK(model->infinite_width());
  const Interval iv = model->eval({0.5});
  CHECK(std::isinf(iv.upper));
  auto cw = coverage_and_width(*model, d);
  CHECK(cw.coverage == doctest::Approx(1.0));
}

TEST_CASE("conformal offset ignores point order") {
  Rng rng(9);
  ReplicatedDataset d;
  for (int i = 0; i < 25; ++i) {
    d.points.push_back({rng.uniform()});
    d.replications.push_back({rng.normal(), rng.normal()});
  }
  ReplicatedDataset reversed;
  for (std::size_t i = d.size(); i-- > 0;) {
    reversed.points.push_back(d.points[i]);
    reversed.replications.push_back(d.replications[i]);
  }
  auto a = split_conformal(d, kZeroBase, 0.1, 1);
  auto b = split_conformal(reversed, kZeroBase, 0.1, 1);
  CHECK(a->offset() == doctest::Approx(b->offset()));
}

TEST_CASE("split conformal width is constant in x") {
  Rng rng(10);
  auto d = linear_noise_data(30, 2, rng);
  auto model = split_conformal(d, kLinearBase, 0.1, 1);
  const double w0 = model->eval({0.1}).upper - model->eval({0.1}).lower;
  const double w1 = model->eval({0.9}).upper - model->eval({0.9}).lower;
  CHECK(w0 == doctest::Approx(w1).epsilon(1e-12));
}

TEST_CASE("constant quantile pair reduces CQR to two-sided conformal") {
  Rng rng(11);
  auto d = linear_noise_data(30, 2, rng);
  const BaseQuantileRegressor const_pair =
      [](const ReplicatedDataset&, double, double, std::uint64_t) {
        QuantilePredictor q;
        q.lower = [](const std::vector<double>&) { return 0.0; };
        q.upper = [](const std::vector<double>&) { return 0.0; };
        return q;
      };
  auto cqr = split_cqr(d, const_pair, 0.1, 1);
  auto scp = split_conformal(d, kZeroBase, 0.1, 1);
  // Same scores |y_i|, same offsets, same intervals.
  CHECK(cqr->offset() == doctest::Approx(scp->offset()));
  for (double x : {0.2, 0.8}) {
    CHECK(cqr->eval({x}).lower == doctest::Approx(scp->eval({x}).lower));
    CHECK(cqr->eval({x}).upper == doctest::Approx(scp->eval({x}).upper));
  }
}

TEST_CASE("CQR width tracks a varying base") {
  Rng rng(12);
  auto d = linear_noise_data(40, 2, rng);
  const BaseQuantileRegressor varying =
      [](const ReplicatedDataset&, double, double, std::uint64_t) {
        QuantilePredictor q;
        q.lower = [](const std::vector<double>& x) { return -1.0 - x[0]; };
        q.upper = [](const std::vector<double>& x) { return 1.0 + x[0]; };
        return q;
      };
  auto model = split_cqr(d, varying, 0.1, 1);
  const double w0 = model->eval({0.0}).upper - model->eval({0.0}).lower;
  const double w1 = model->eval({1.0}).upper - model->eval({1.0}).lower;
  CHECK(w1 - w0 == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("oracle quantile base keeps the conformal correction small") {
  Rng rng(13);
  ReplicatedDataset d;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    d.points.push_back({rng.uniform()});
    d.replications.push_back({rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  }
  // True 2.5% / 97.5% quantiles of U(-1,1).
  const BaseQuantileRegressor oracle =
      [](const ReplicatedDataset&, double, double, std::uint64_t) {
        QuantilePredictor q;
        q.lower = [](const std::vector<double>&) { return -0.95; };
        q.upper = [](const std::vector<double>&) { return 0.95; };
        return q;
      };
  auto model = split_cqr(d, oracle, 0.05, 1);
  CHECK(model->offset() > -0.1);
  CHECK(model->offset() < 0.1);
  const double width = model->eval({0.5}).upper - model->eval({0.5}).lower;
  CHECK(width == doctest::Approx(1.9).epsilon(0.1));
}

TEST_CASE("single-replicate data fall back to a point-level split") {
  Rng rng(14);
  ReplicatedDataset d;
  for (int i = 0; i < 40; ++i) {
    d.points.push_back({rng.uniform()});
    d.replications.push_back({2.0 * rng.uniform() + 0.1 * rng.normal()});
  }
  auto model = split_conformal(d, kLinearBase, 0.1, 5);
  CHECK_FALSE(model->infinite_width());
  CHECK(model->offset() >= 0.0);
}

TEST_CASE("type-I coverage holds over meta repetitions") {
  // Fresh data and one fresh test draw per repetition; the mean hit rate
  // estimates the marginal coverage the split guarantee bounds below.
  const double alpha = 0.05;
  const int reps = 300;
  int scp_hits = 0, cqr_hits = 0;
  const BaseQuantileRegressor oracle_q =
      [](const ReplicatedDataset&, double, double, std::uint64_t) {
        QuantilePredictor q;
        q.lower = [](const std::vector<double>& x) { return 2.0 * x[0] - 0.98; };
        q.upper = [](const std::vector<double>& x) { return 2.0 * x[0] + 0.98; };
        return q;
      };
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(derive_seed(3000, static_cast<std::uint64_t>(rep)));
    auto d = linear_noise_data(50, 2, rng);
    const double xt = rng.uniform();
    const double yt = 2.0 * xt + 0.5 * rng.normal();

    auto scp = split_conformal(d, kLinearBase, alpha,
                               derive_seed(3001, static_cast<std::uint64_t>(rep)));
    const Interval a = scp->eval({xt});
    if (yt >= a.lower && yt <= a.upper) ++scp_hits;

    auto cqr = split_cqr(d, oracle_q, alpha,
                         derive_seed(3002, static_cast<std::uint64_t>(rep)));
    const Interval b = cqr->eval({xt});
    if (yt >= b.lower && yt <= b.upper) ++cqr_hits;
  }
  // 0.95 minus ~2.5 Monte-Carlo standard errors.
  CHECK(static_cast<double>(scp_hits) / reps >= 0.918);
  CHECK(static_cast<double>(cqr_hits) / reps >= 0.918);
}

TEST_CASE("alpha outside (0,1) is rejected") {
  Rng rng(15);
  auto d = linear_noise_data(10, 2, rng);
  CHECK_THROWS_AS(split_conformal(d, kZeroBase, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_conformal(d, kZeroBase, 1.0, 1), std::invalid_argument);
}
