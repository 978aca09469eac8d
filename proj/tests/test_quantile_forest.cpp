#include <doctest.h>

#include <cmath>

#include "pimeta/quantile_forest.hpp"
#include "pimeta/rng.hpp"
#include "pimeta/simulators.hpp"

using namespace pimeta;

namespace {

// Analytic quantile of the geometric pmf (1-x) x^k: smallest k whose CDF
// reaches q.
int geometric_quantile(double x, double q) {
  int k = 0;
  while (1.0 - std::pow(x, k + 1) < q) ++k;
  return k;
}

}  // namespace

TEST_CASE("constant responses give constant quantiles") {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    xs.push_back({rng.uniform()});
    ys.push_back(7.5);
  }
  const QRFModel m = fit_qrf(xs, ys, {20, 5, true, 1});
  for (double q : {0.05, 0.5, 0.95})
    CHECK(m.quantile({0.3}, q) == doctest::Approx(7.5));
  const Interval iv = m.interval({0.3}, 0.05);
  CHECK(iv.lower == doctest::Approx(7.5));
  CHECK(iv.upper == doctest::Approx(7.5));
}

TEST_CASE("single all-data leaf reproduces the empirical quantile rule") {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  Rng rng(42);
  for (int i = 0; i < 30; ++i) {
    xs.push_back({rng.uniform()});
    ys.push_back(rng.normal());
  }
  QRFConfig cfg;
  cfg.n_trees = 1;
  cfg.min_leaf = 30;  // forces one leaf
  cfg.bootstrap = false;
  const QRFModel m = fit_qrf(xs, ys, cfg);
  for (double q : {0.025, 0.3, 0.5, 0.9, 0.975}) {
    CHECK(m.quantile({0.5}, q) ==
          doctest::Approx(empirical_quantile(ys, q)).epsilon(1e-12));
  }
}

TEST_CASE("left-continuous convention on a two-point leaf") {
  const std::vector<std::vector<double>> xs{{0.0}, {1.0}};
  const std::vector<double> ys{-1.0, 1.0};
  QRFConfig cfg;
  cfg.n_trees = 1;
  cfg.min_leaf = 2;
  cfg.bootstrap = false;
  const QRFModel m = fit_qrf(xs, ys, cfg);
  CHECK(m.quantile({0.5}, 0.5) == doctest::Approx(-1.0));
  CHECK(m.quantile({0.5}, 0.500001) == doctest::Approx(1.0));
}

TEST_CASE("step function is resolved away from the jump") {
  Rng rng(43);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform();
    xs.push_back({x});
    ys.push_back((x > 0.5 ? 1.0 : 0.0) + 0.01 * rng.normal());
  }
  const QRFModel m = fit_qrf(xs, ys, {100, 5, true, 7});
  CHECK(m.quantile({0.25}, 0.5) == doctest::Approx(0.0).epsilon(0.1));
  CHECK(m.quantile({0.75}, 0.5) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("quantiles are monotone in q and bounded by the data") {
  Rng rng(44);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  double lo = 1e30, hi = -1e30;
  for (int i = 0; i < 300; ++i) {
    xs.push_back({rng.uniform()});
    ys.push_back(std::sin(5 * xs.back()[0]) + 0.3 * rng.normal());
    lo = std::min(lo, ys.back());
    hi = std::max(hi, ys.back());
  }
  const QRFModel m = fit_qrf(xs, ys, {50, 5, true, 3});
  for (double x : {0.1, 0.5, 0.9}) {
    double prev = -1e30;
    for (double q = 0.02; q < 1.0; q += 0.02) {
      const double v = m.quantile({x}, q);
      CHECK(v >= prev);
      CHECK(v >= lo);
      CHECK(v <= hi);
      prev = v;
    }
    // q -> 1 reaches the maximum of the leaves x lands in.
    CHECK(m.quantile({x}, 0.999999) <= hi);
  }
}

TEST_CASE("flat geometric sample matches the analytic quantile") {
  Rng rng(45);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 2000; ++i) {
    xs.push_back({0.5});
    ys.push_back(static_cast<double>(mm1_sample(MM1Config{0.5}, rng)));
  }
  const QRFModel m = fit_qrf(xs, ys, {50, 5, true, 5});
  const int oracle_hi = geometric_quantile(0.5, 0.975);  // = 5
  CHECK(oracle_hi == 5);
  CHECK(std::abs(m.quantile({0.5}, 0.975) - oracle_hi) <= 1.0);

  const Interval iv = m.interval({0.5}, 0.05);
  CHECK(iv.lower == doctest::Approx(0.0));
  CHECK(std::abs(iv.upper - oracle_hi) <= 1.0);
}

TEST_CASE("alpha 1 collapses the interval to the median") {
  Rng rng(46);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 60; ++i) {
    xs.push_back({rng.uniform()});
    ys.push_back(rng.normal());
  }
  const QRFModel m = fit_qrf(xs, ys, {30, 5, true, 2});
  const Interval iv = m.interval({0.4}, 1.0);
  CHECK(iv.lower == doctest::Approx(iv.upper));
  CHECK(iv.lower == doctest::Approx(m.quantile({0.4}, 0.5)));
}

TEST_CASE("fits are deterministic given the seed") {
  Rng rng(47);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 100; ++i) {
    xs.push_back({rng.uniform()});
    ys.push_back(rng.normal());
  }
  const QRFModel a = fit_qrf(xs, ys, {40, 5, true, 9});
  const QRFModel b = fit_qrf(xs, ys, {40, 5, true, 9});
  for (double x : {0.2, 0.6})
    for (double q : {0.1, 0.5, 0.9})
      CHECK(a.quantile({x}, q) == b.quantile({x}, q));
}

TEST_CASE("too few samples are rejected") {
  std::vector<std::vector<double>> xs{{0.0}, {1.0}, {2.0}};
  std::vector<double> ys{0.0, 1.0, 2.0};
  QRFConfig cfg;
  cfg.min_leaf = 5;  // a single leaf could not reach min_leaf
  CHECK_THROWS_AS(fit_qrf(xs, ys, cfg), std::invalid_argument);
  CHECK_THROWS_AS(fit_qrf({{0.0}}, {1.0}, QRFConfig{1, 1, true, 0}),
                  std::invalid_argument);
}
