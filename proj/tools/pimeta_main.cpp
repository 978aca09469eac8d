#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pimeta/bench.hpp"
#include "pimeta/conformal.hpp"
#include "pimeta/kriging.hpp"
#include "pimeta/validator.hpp"

namespace {

using namespace pimeta;

constexpr int kExitConfig = 2;
constexpr int kExitMethod = 3;

int cmd_simulate(const std::string& sim_name, const std::string& preset,
                 std::vector<double> points, int reps, std::uint64_t seed,
                 const std::string& out) {
  Simulator sim = Simulator::mm1;
  if (!preset.empty()) {
    const DesignSpec spec = design_preset(preset);
    sim = preset_simulator(preset);
    if (points.empty()) points = spec.points;
    if (reps <= 0) reps = spec.reps;
  } else {
    sim = simulator_from_name(sim_name);
    if (reps <= 0) reps = 1;
  }
  if (points.empty())
    throw ConfigError("simulate: give --preset or explicit --points");
  const ReplicatedDataset data = generate_design(sim, points, reps, seed);
  save_csv(data, out);
  std::cout << "wrote " << data.size() << " points x " << reps
            << " reps to " << out << "\n";
  return 0;
}

// Fits one method on one dataset and dumps the interval over an x grid.
int cmd_fit(const std::string& method, const std::string& data_path,
            double alpha, double lambda, std::uint64_t seed, int grid_n,
            const std::string& out) {
  const ReplicatedDataset data = load_csv(data_path);
  if (data.dim() != 1)
    throw ConfigError("fit: interval dump supports 1-d designs");

  IntervalModelPtr model;
  std::string extra_json;
  if (method == "SK") {
    auto sk = std::make_shared<SKModel>(fit_sk(data, 1, 10, seed));
    extra_json = sk->to_json();
    model = std::make_shared<SKIntervalModel>(std::move(sk), alpha, true);
  } else if (method == "SCP") {
    TrainConfig tc;
    model = split_conformal(data, mlp_base_regressor(tc), alpha, seed);
  } else if (method == "QRF") {
    const FlatData flat = flatten(data);
    QRFConfig qc;
    qc.seed = seed;
    model = std::make_shared<QRFIntervalModel>(fit_qrf(flat.xs, flat.ys, qc),
                                               alpha);
  } else if (method == "SCQR") {
    model = split_cqr(data, qrf_base_quantile(QRFConfig{}), alpha, seed);
  } else if (method == "NN") {
    TrainConfig tc;
    tc.lambda = lambda;
    tc.seed = seed;
    auto nn = train_pi_network(data, tc);
    extra_json = nn->to_json();
    model = nn;
  } else {
    throw ConfigError("fit: unknown method " + method +
                      " (SK, SCP, QRF, SCQR, NN)");
  }

  double lo = data.points.front()[0], hi = lo;
  for (const auto& p : data.points) {
    lo = std::min(lo, p[0]);
    hi = std::max(hi, p[0]);
  }
  nlohmann::json j;
  j["label"] = model->label();
  j["alpha"] = alpha;
  if (!extra_json.empty()) j["model"] = nlohmann::json::parse(extra_json);
  auto& rows = j["intervals"] = nlohmann::json::array();
  for (int k = 0; k < grid_n; ++k) {
    const double x =
        grid_n == 1 ? lo : lo + (hi - lo) * k / static_cast<double>(grid_n - 1);
    const Interval iv = model->eval({x});
    rows.push_back({{"x", x}, {"lower", iv.lower}, {"upper", iv.upper}});
  }
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot open " + out);
  os << j.dump(2) << "\n";
  std::cout << "wrote " << model->label() << " intervals to " << out << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_override, const std::string& format) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out_override.empty()) cfg.out = out_override;

  const ExperimentReport report = run_experiment(cfg);
  const ReportFormat fmt = report_format_from_name(format);
  emit_report(report, cfg.out + ".json", ReportFormat::json);
  emit_report(report, cfg.out + (fmt == ReportFormat::csv      ? ".csv"
                                 : fmt == ReportFormat::markdown ? ".md"
                                                                 : ".json"),
              fmt);
  std::cout << render_report(report, fmt);

  for (const auto& r : report.results) {
    if (r.fully_failed()) {
      std::cerr << "method " << r.method << " failed in every repetition\n";
      return kExitMethod;
    }
  }
  return 0;
}

int cmd_report(const std::string& report_path, const std::string& out,
               const std::string& format) {
  std::ifstream in(report_path);
  if (!in) throw ConfigError("report: cannot open " + report_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const ExperimentReport report = ExperimentReport::from_json(buf.str());
  const ReportFormat fmt = report_format_from_name(format);
  if (out.empty()) {
    std::cout << render_report(report, fmt);
  } else {
    emit_report(report, out, fmt);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction-interval metamodeling toolkit"};
  app.require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "generate a dataset CSV");
  std::string sim_name = "mm1", preset, sim_out = "dataset.csv";
  std::vector<double> sim_points;
  int sim_reps = 0;
  std::uint64_t sim_seed = 0;
  simulate->add_option("--sim", sim_name, "mm1 or network");
  simulate->add_option("--preset", preset, "design preset name");
  simulate->add_option("--points", sim_points, "explicit design points");
  simulate->add_option("--reps", sim_reps, "replications per point");
  simulate->add_option("--seed", sim_seed, "master seed");
  simulate->add_option("--out", sim_out, "output CSV path");

  auto* fit = app.add_subcommand("fit", "fit one method on one dataset");
  std::string fit_method = "SK", fit_data, fit_out = "model.json";
  double fit_alpha = 0.05, fit_lambda = 1.0;
  std::uint64_t fit_seed = 0;
  int fit_grid = 101;
  fit->add_option("--method", fit_method, "SK|SCP|QRF|SCQR|NN");
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--alpha", fit_alpha, "miscoverage level");
  fit->add_option("--lambda", fit_lambda, "NN loss multiplier");
  fit->add_option("--seed", fit_seed, "seed");
  fit->add_option("--grid", fit_grid, "interval dump grid size");
  fit->add_option("--out", fit_out, "output JSON path");

  auto* bench = app.add_subcommand("bench", "run a full experiment");
  std::string bench_config, bench_out, bench_format = "csv";
  std::uint64_t bench_seed = 0;
  bool bench_seed_set = false;
  bench->add_option("--config", bench_config, "experiment config JSON")
      ->required();
  bench->add_option("--seed", bench_seed, "override the master seed")
      ->each([&](const std::string&) { bench_seed_set = true; });
  bench->add_option("--out", bench_out, "output path stem");
  bench->add_option("--format", bench_format, "csv|json|markdown");

  auto* report = app.add_subcommand("report", "re-render a JSON report");
  std::string rep_path, rep_out, rep_format = "markdown";
  report->add_option("--report", rep_path, "report JSON path")->required();
  report->add_option("--out", rep_out, "output path (stdout if empty)");
  report->add_option("--format", rep_format, "csv|json|markdown");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed())
      return cmd_simulate(sim_name, preset, sim_points, sim_reps, sim_seed,
                          sim_out);
    if (fit->parsed())
      return cmd_fit(fit_method, fit_data, fit_alpha, fit_lambda, fit_seed,
                     fit_grid, fit_out);
    if (bench->parsed())
      return cmd_bench(bench_config,
                       bench_seed_set ? std::optional<std::uint64_t>(bench_seed)
                                      : std::nullopt,
                       bench_out, bench_format);
    if (report->parsed()) return cmd_report(rep_path, rep_out, rep_format);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMethod;
  }
  return 0;
}
