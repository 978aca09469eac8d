#include <doctest.h>

#include <cmath>

#include "pimeta/validator.hpp"
#include "pimeta/rng.hpp"

using namespace pimeta;

namespace {

IntervalModelPtr band(double lo, double hi, const std::string& label) {
  return std::make_shared<FunctionalIntervalModel>(
      [lo, hi](const std::vector<double>&) { return Interval{lo, hi}; },
      label);
}

ReplicatedDataset grid_data(int n, int reps, std::uint64_t seed) {
  Rng rng(seed);
  ReplicatedDataset d;
  for (int i = 0; i < n; ++i) {
    d.points.push_back({rng.uniform()});
    std::vector<double> ys;
    for (int r = 0; r < reps; ++r) ys.push_back(rng.normal());
    d.replications.push_back(ys);
  }
  return d;
}

}  // namespace

TEST_CASE("coverage matrix on hand cases") {
  const auto data = grid_data(6, 2, 51);

  CandidateSet all;
  all.add(band(-100.0, 100.0, "everything"));
  auto stats = coverage_matrix(all, data);
  CHECK(stats.coverage(0) == doctest::Approx(1.0));
  CHECK(stats.covariance(0, 0) == doctest::Approx(0.0));
  CHECK(stats.n_points == 6);

  CandidateSet twins;
  twins.add(band(-1.0, 1.0, "a"));
  twins.add(band(-1.0, 1.0, "b"));
  stats = coverage_matrix(twins, data);
  CHECK(stats.covariance(0, 1) == doctest::Approx(stats.covariance(0, 0)));
  CHECK(stats.covariance(1, 0) == doctest::Approx(stats.covariance(1, 1)));
  // Rank 1: determinant vanishes.
  const double det = stats.covariance(0, 0) * stats.covariance(1, 1) -
                     stats.covariance(0, 1) * stats.covariance(1, 0);
  CHECK(det == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two points, one hit and one miss") {
  ReplicatedDataset d;
  d.points = {{0.0}, {1.0}};
  d.replications = {{0.5}, {10.0}};
  CandidateSet set;
  set.add(band(0.0, 1.0, "m"));
  const auto stats = coverage_matrix(set, d);
  CHECK(stats.coverage(0) == doctest::Approx(0.5));
  CHECK(stats.covariance(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("unequal replication counts are rejected") {
  ReplicatedDataset d;
  d.points = {{0.0}, {1.0}};
  d.replications = {{0.5, 0.6}, {10.0}};
  CandidateSet set;
  set.add(band(0.0, 1.0, "m"));
  CHECK_THROWS_WITH_AS(coverage_matrix(set, d),
                       doctest::Contains("equal replications"),
                       std::invalid_argument);
}

TEST_CASE("gaussian sup quantile matches analytic oracles") {
  // Frozen oracles: z_{0.95} for one normal, and the 0.95-quantile of the
  // max of two independent standard normals, solving Phi(q)^2 = 0.95.
  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  CHECK(std::abs(gaussian_sup_quantile(one, 0.05, SelectorMode::normalized,
                                       100000, 71) -
                 1.6448536269514722) <= 0.02);

  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  CHECK(std::abs(gaussian_sup_quantile(eye, 0.05, SelectorMode::normalized,
                                       100000, 72) -
                 1.9545083272139914) <= 0.02);

  // Perfect correlation collapses the max back to the single case.
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 2);
  CHECK(std::abs(gaussian_sup_quantile(ones, 0.05, SelectorMode::normalized,
                                       100000, 73) -
                 1.6448536269514722) <= 0.02);
}

TEST_CASE("normalized and unnormalized modes differ by the scale") {
  Eigen::MatrixXd cov(1, 1);
  cov << 4.0;  // sigma = 2
  const double qn =
      gaussian_sup_quantile(cov, 0.05, SelectorMode::normalized, 50000, 74);
  const double qu =
      gaussian_sup_quantile(cov, 0.05, SelectorMode::unnormalized, 50000, 74);
  CHECK(qn == doctest::Approx(1.645).epsilon(0.02));
  CHECK(qu == doctest::Approx(2.0 * 1.645).epsilon(0.02));
}

TEST_CASE("quantile is monotone nonincreasing in beta") {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(3, 3);
  const double q1 =
      gaussian_sup_quantile(cov, 0.01, SelectorMode::normalized, 50000, 75);
  const double q2 =
      gaussian_sup_quantile(cov, 0.05, SelectorMode::normalized, 50000, 75);
  const double q3 =
      gaussian_sup_quantile(cov, 0.20, SelectorMode::normalized, 50000, 75);
  CHECK(q1 >= q2);
  CHECK(q2 >= q3);
}

TEST_CASE("degenerate inputs") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(2, 2);
  CHECK(gaussian_sup_quantile(zero, 0.05, SelectorMode::normalized, 10000, 76) ==
        0.0);

  // Slightly indefinite matrix is repaired by eigenvalue clipping.
  Eigen::MatrixXd wobbly(2, 2);
  wobbly << 1.0, 1.0 + 1e-9, 1.0 + 1e-9, 1.0;
  const double q = gaussian_sup_quantile(wobbly, 0.05,
                                         SelectorMode::unnormalized, 10000, 77);
  CHECK(q > 0.0);
  CHECK(std::isfinite(q));

  CHECK_THROWS_AS(gaussian_sup_quantile(zero, 0.05, SelectorMode::naive, 10000, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      gaussian_sup_quantile(zero, 0.05, SelectorMode::normalized, 100, 1),
      std::invalid_argument);
}

TEST_CASE("selection prefers the narrowest feasible candidate") {
  const auto data = grid_data(40, 2, 52);
  CandidateSet set;
  set.add(band(-4.0, 5.0, "wide"));    // width 9, covers everything
  set.add(band(-4.5, -0.5, "narrow"));  // width 4, covers everything drawn
  // Standard normals stay inside (-4.5, 5) essentially always; make the
  // narrow one truly cover by spanning the sample range.
  double lo = 0.0, hi = 0.0;
  for (const auto& reps : data.replications)
    for (double y : reps) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  CandidateSet real;
  real.add(band(lo - 5.0, hi + 4.0, "w9ish"));
  real.add(band(lo - 2.0, hi + 2.0, "w4ish"));

  SelectionConfig cfg;
  cfg.target_levels = {0.95};
  cfg.mc_samples = 20000;
  cfg.seed = 53;
  const SelectionResult res =
      select(real, data, cfg, SelectorMode::normalized);
  REQUIRE(res.levels.size() == 1);
  CHECK(res.levels.front().feasible);
  CHECK(res.levels.front().index == 1);  // the narrower of the two
  CHECK(res.levels.front().coverage == doctest::Approx(1.0));
  CHECK(res.levels.front().margin == doctest::Approx(0.0));
  (void)set;
}

TEST_CASE("ties break to the smaller index") {
  const auto data = grid_data(20, 1, 54);
  double lo = -10.0, hi = 10.0;
  CandidateSet set;
  set.add(band(lo, hi, "first"));
  set.add(band(lo, hi, "second"));
  SelectionConfig cfg;
  cfg.mc_samples = 10000;
  const auto res = select(set, data, cfg, SelectorMode::naive);
  CHECK(res.levels.front().index == 0);
}

TEST_CASE("infeasible levels are reported, not thrown") {
  const auto data = grid_data(20, 1, 55);
  CandidateSet set;
  set.add(band(100.0, 101.0, "misses"));
  SelectionConfig cfg;
  cfg.mc_samples = 10000;
  const auto res = select(set, data, cfg, SelectorMode::normalized);
  CHECK_FALSE(res.levels.front().feasible);
  const std::string js = res.to_json();
  CHECK(js.find("\"feasible\": false") != std::string::npos);
}

TEST_CASE("margins behave per mode") {
  // Candidates with different hit variances: a tight band that half-covers
  // and a huge band that always covers.
  const auto data = grid_data(60, 2, 56);
  CandidateSet set;
  set.add(band(-0.7, 0.7, "half"));
  set.add(band(-50.0, 50.0, "all"));

  SelectionConfig cfg;
  cfg.target_levels = {0.4};
  cfg.mc_samples = 20000;
  cfg.seed = 57;

  const auto norm = select(set, data, cfg, SelectorMode::normalized);
  const auto unnorm = select(set, data, cfg, SelectorMode::unnormalized);
  const auto naive = select(set, data, cfg, SelectorMode::naive);

  CHECK(norm.levels.front().margin >= 0.0);
  CHECK(naive.levels.front().margin == 0.0);
  CHECK(naive.sup_quantile == 0.0);

  // Unnormalized margin is the same constant for every candidate.
  const double expected_margin =
      unnorm.sup_quantile / std::sqrt(static_cast<double>(data.size()));
  CHECK(unnorm.levels.front().margin == doctest::Approx(expected_margin));

  // The naive feasible set is a superset, so its chosen width can only be
  // narrower or equal.
  if (norm.levels.front().feasible) {
    REQUIRE(naive.levels.front().feasible);
    CHECK(naive.levels.front().width <= norm.levels.front().width + 1e-12);
  }
}

TEST_CASE("selection result serializes chosen details") {
  const auto data = grid_data(10, 1, 58);
  CandidateSet set;
  set.add(band(-20.0, 20.0, "all"));
  SelectionConfig cfg;
  cfg.mc_samples = 10000;
  const auto res = select(set, data, cfg, SelectorMode::unnormalized);
  const std::string js = res.to_json();
  CHECK(js.find("\"mode\": \"unnormalized\"") != std::string::npos);
  CHECK(js.find("\"index\"") != std::string::npos);
  CHECK(js.find("\"width\"") != std::string::npos);
  CHECK(js.find("\"margin\"") != std::string::npos);
}
