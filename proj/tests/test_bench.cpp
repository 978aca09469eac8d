#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pimeta/bench.hpp"

using namespace pimeta;

namespace {

// Drops the trailing runtime column from every CSV line.
std::string strip_runtime(const std::string& csv) {
  std::stringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    out += line.substr(0, cut) + '\n';
  }
  return out;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.simulator = Simulator::mm1;
  cfg.design.points = {0.4, 0.5, 0.6, 0.7};
  cfg.design.reps = 10;
  cfg.test_points = 10;
  cfg.test_reps = 20;
  cfg.methods = {Method::SK};
  cfg.repetitions = 5;
  cfg.seed = 20250809;
  cfg.sk.restarts = 3;
  return cfg;
}

}  // namespace

TEST_CASE("design presets match the experiment grids") {
  const auto d1 = design_preset("mm1-design1");
  CHECK(d1.points.size() == 7);
  CHECK(d1.points.front() == doctest::Approx(0.3));
  CHECK(d1.points.back() == doctest::Approx(0.9));
  CHECK(d1.reps == 50);

  const auto d2 = design_preset("mm1-design2");
  CHECK(d2.points.size() == 31);
  CHECK(d2.points[1] - d2.points[0] == doctest::Approx(0.02));
  CHECK(d2.reps == 5);

  const auto n1 = design_preset("net-design1");
  CHECK(n1.points.size() == 11);
  CHECK(n1.points.back() == doctest::Approx(600.0));
  CHECK(n1.reps == 50);

  const auto n2 = design_preset("net-design2");
  CHECK(n2.points.size() == 41);
  CHECK(n2.reps == 5);
  CHECK(preset_simulator("net-design2") == Simulator::network);

  CHECK_THROWS_AS(design_preset("mm1-design9"), ConfigError);
}

TEST_CASE("config parsing applies presets and defaults") {
  const auto cfg = parse_config(R"({
    "design": {"preset": "mm1-design1"},
    "methods": ["SK", "QRF"],
    "repetitions": 3,
    "seed": 7
  })");
  CHECK(cfg.simulator == Simulator::mm1);
  CHECK(cfg.design.points.size() == 7);
  CHECK(cfg.design.reps == 50);
  CHECK(cfg.methods.size() == 2);
  CHECK(cfg.alpha == doctest::Approx(0.05));
  CHECK(cfg.beta == doctest::Approx(0.05));
  CHECK(cfg.train_fraction == doctest::Approx(0.6));
  CHECK(cfg.test_points == 50);
  CHECK(cfg.test_reps == 100);
  CHECK(cfg.nn.lambda_count == 20);
}

TEST_CASE("config errors are typed") {
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"design": {"preset": "mm1-design1"},
                                   "methods": ["XX"]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"design": {"preset": "mm1-design1"},
                                   "alpha": 1.5})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("{}"), ConfigError);  // no design
}

TEST_CASE("small experiment produces a grid-valued EP") {
  const auto report = run_experiment(tiny_config());
  REQUIRE(report.results.size() == 1);
  const auto& sk = report.results.front();
  CHECK(sk.coverage.size() == 5);
  for (double c : sk.coverage) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
  const double ep = sk.ep(report.config.alpha);
  CHECK(ep * 5.0 == doctest::Approx(std::round(ep * 5.0)));
  REQUIRE(sk.iw().has_value());
  CHECK(*sk.iw() >= 0.0);
}

TEST_CASE("identical seeds render identical reports") {
  auto cfg = tiny_config();
  cfg.methods = {Method::SK, Method::QRF};
  cfg.repetitions = 2;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  CHECK(strip_runtime(render_report(a, ReportFormat::csv)) ==
        strip_runtime(render_report(b, ReportFormat::csv)));

  cfg.seed += 1;
  const auto c = run_experiment(cfg);
  CHECK(strip_runtime(render_report(a, ReportFormat::csv)) !=
        strip_runtime(render_report(c, ReportFormat::csv)));
}

TEST_CASE("csv report has the documented columns") {
  auto cfg = tiny_config();
  cfg.repetitions = 2;
  const auto report = run_experiment(cfg);
  const std::string csv = render_report(report, ReportFormat::csv);
  std::stringstream in(csv);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "method,EP,IW,N,alpha,beta,runtime_s");
  std::getline(in, row);
  CHECK(std::count(row.begin(), row.end(), ',') == 6);
  CHECK(row.rfind("SK,", 0) == 0);
}

TEST_CASE("empty method lists render a header-only csv") {
  auto cfg = tiny_config();
  cfg.methods.clear();
  const auto report = run_experiment(cfg);
  const std::string csv = render_report(report, ReportFormat::csv);
  CHECK(csv == "method,EP,IW,N,alpha,beta,runtime_s\n");
}

TEST_CASE("json reports round-trip") {
  auto cfg = tiny_config();
  cfg.repetitions = 2;
  const auto report = run_experiment(cfg);
  const auto back = ExperimentReport::from_json(report.to_json());
  CHECK(back.equals(report));
}

TEST_CASE("emit_report writes all formats") {
  auto cfg = tiny_config();
  cfg.repetitions = 1;
  const auto report = run_experiment(cfg);
  for (auto [fmt, path] : {std::pair{ReportFormat::csv, "t_report.csv"},
                           {ReportFormat::json, "t_report.json"},
                           {ReportFormat::markdown, "t_report.md"}}) {
    emit_report(report, path, fmt);
    std::ifstream in(path);
    CHECK(in.good());
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == render_report(report, fmt));
    std::remove(path);
  }
}

TEST_CASE("markdown report carries EP/IW pairs per method") {
  auto cfg = tiny_config();
  cfg.repetitions = 2;
  const auto report = run_experiment(cfg);
  const std::string md = render_report(report, ReportFormat::markdown);
  CHECK(md.find("SK EP") != std::string::npos);
  CHECK(md.find("SK IW") != std::string::npos);
  CHECK(md.find("**") != std::string::npos);  // a best method is marked
}
