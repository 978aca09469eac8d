#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "pimeta/dataset.hpp"
#include "pimeta/rng.hpp"

using namespace pimeta;

namespace {

ReplicatedDataset make_points(int n, int reps_per_point = 1) {
  ReplicatedDataset d;
  for (int i = 0; i < n; ++i) {
    d.points.push_back({static_cast<double>(i)});
    std::vector<double> r;
    for (int j = 0; j < reps_per_point; ++j)
      r.push_back(10.0 * i + j);
    d.replications.push_back(r);
  }
  return d;
}

}  // namespace

TEST_CASE("split_disjoint partitions at point level") {
  const auto data = make_points(10, 3);
  auto [a, b] = split_disjoint(data, 0.6, 42);
  CHECK(a.size() == 6);
  CHECK(b.size() == 4);

  // Union equals the input as multisets of points, none shared.
  std::vector<double> seen;
  for (const auto& p : a.points) seen.push_back(p[0]);
  for (const auto& p : b.points) seen.push_back(p[0]);
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < 10; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);

  // Replicates travel with their point.
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.replications[i].front() == 10.0 * a.points[i][0]);
}

TEST_CASE("split_disjoint handles the two-point case") {
  const auto data = make_points(2);
  auto [a, b] = split_disjoint(data, 0.5, 7);
  CHECK(a.size() == 1);
  CHECK(b.size() == 1);
}

TEST_CASE("split_disjoint is deterministic") {
  const auto data = make_points(12, 2);
  auto [a1, b1] = split_disjoint(data, 0.4, 99);
  auto [a2, b2] = split_disjoint(data, 0.4, 99);
  CHECK(a1 == a2);
  CHECK(b1 == b2);
  auto [a3, b3] = split_disjoint(data, 0.4, 100);
  CHECK(a1.points != a3.points);  // overwhelmingly likely with 12 points
}

TEST_CASE("split_disjoint rejects degenerate splits") {
  const auto data = make_points(2);
  CHECK_THROWS_WITH_AS(split_disjoint(data, 0.1, 1) /* round(0.2)=0 */,
                       "degenerate split", std::invalid_argument);
  CHECK_THROWS_AS(split_disjoint(make_points(1), 0.5, 1),
                  std::invalid_argument);
}

TEST_CASE("empirical_quantile follows the ceiling rule") {
  CHECK(empirical_quantile({1, 2, 3, 4, 5}, 0.5) == 3);  // ceil(2.5) = 3rd
  CHECK(empirical_quantile({7}, 1.5) ==
        std::numeric_limits<double>::infinity());

  // s = 99 values, level (1-0.05)(1+1/99): level*s = 95 exactly.
  std::vector<double> v;
  for (int i = 1; i <= 99; ++i) v.push_back(static_cast<double>(i));
  Rng rng(3);
  for (std::size_t i = v.size() - 1; i > 0; --i)
    std::swap(v[i], v[rng.next_u64() % (i + 1)]);
  CHECK(empirical_quantile(v, 0.95 * (1.0 + 1.0 / 99.0)) == 95);

  CHECK_THROWS_AS(empirical_quantile({}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(empirical_quantile({1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("empirical_quantile properties") {
  Rng rng(17);
  std::vector<double> v;
  for (int i = 0; i < 40; ++i) v.push_back(rng.normal());

  // Monotone in level.
  double prev = -std::numeric_limits<double>::infinity();
  for (double level = 0.05; level <= 1.0; level += 0.05) {
    const double q = empirical_quantile(v, level);
    CHECK(q >= prev);
    prev = q;
  }
  // Permutation invariant.
  auto shuffled = v;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(empirical_quantile(v, 0.37) == empirical_quantile(shuffled, 0.37));
  // Level with ceil(level*s) == s returns the max.
  CHECK(empirical_quantile(v, 1.0) == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("coverage_and_width on hand cases") {
  ReplicatedDataset test;
  test.points = {{0.0}, {1.0}};
  test.replications = {{1.0, 2.0}, {3.0, 4.0}};

  FunctionalIntervalModel wide(
      [](const std::vector<double>&) { return Interval{0.0, 10.0}; }, "wide");
  auto cw = coverage_and_width(wide, test);
  CHECK(cw.coverage == doctest::Approx(1.0));
  CHECK(cw.width == doctest::Approx(10.0));

  // First point fully covered, second fully missed.
  FunctionalIntervalModel half(
      [](const std::vector<double>& x) {
        return x[0] < 0.5 ? Interval{0.0, 2.5} : Interval{10.0, 11.0};
      },
      "half");
  cw = coverage_and_width(half, test);
  CHECK(cw.coverage == doctest::Approx(0.5));

  // Zero-width interval exactly on the observation counts as covered.
  ReplicatedDataset single;
  single.points = {{0.0}};
  single.replications = {{5.0}};
  FunctionalIntervalModel point(
      [](const std::vector<double>&) { return Interval{5.0, 5.0}; }, "pt");
  cw = coverage_and_width(point, single);
  CHECK(cw.coverage == doctest::Approx(1.0));
  CHECK(cw.width == doctest::Approx(0.0));
}

TEST_CASE("widening an interval never lowers coverage") {
  Rng rng(5);
  ReplicatedDataset test;
  for (int i = 0; i < 20; ++i) {
    test.points.push_back({rng.uniform()});
    test.replications.push_back({rng.normal(), rng.normal()});
  }
  double prev_cover = 0.0;
  for (double h : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    FunctionalIntervalModel m(
        [h](const std::vector<double>&) { return Interval{-h, h}; }, "m");
    const auto cw = coverage_and_width(m, test);
    CHECK(cw.coverage >= prev_cover);
    CHECK(cw.coverage >= 0.0);
    CHECK(cw.coverage <= 1.0);
    CHECK(cw.width >= 0.0);
    prev_cover = cw.coverage;
  }
}

TEST_CASE("dataset CSV round-trips losslessly") {
  Rng rng(11);
  ReplicatedDataset d;
  for (int i = 0; i < 5; ++i) {
    d.points.push_back({rng.normal(), rng.uniform()});
    std::vector<double> r;
    for (int j = 0; j <= i; ++j) r.push_back(rng.normal() * 1e-7);
    d.replications.push_back(r);
  }
  const std::string path = "test_dataset_roundtrip.csv";
  save_csv(d, path);
  const ReplicatedDataset back = load_csv(path);
  CHECK(back == d);
  std::remove(path.c_str());
}

TEST_CASE("candidate set rejects duplicate labels") {
  CandidateSet set;
  auto model = std::make_shared<FunctionalIntervalModel>(
      [](const std::vector<double>&) { return Interval{0, 1}; }, "a");
  set.add(model);
  CHECK(set.size() == 1);
  CHECK_THROWS_AS(set.add(model), std::invalid_argument);
}
