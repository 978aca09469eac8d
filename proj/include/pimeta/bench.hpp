#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pimeta/neural.hpp"
#include "pimeta/quantile_forest.hpp"
#include "pimeta/simulators.hpp"

namespace pimeta {

enum class Method { SK, SCP, QRF, SCQR, NNVA, NNGN, NNGU };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct DesignSpec {
  std::vector<double> points;
  int reps = 1;
};

// Named designs: mm1-design1/2 and net-design1/2.
DesignSpec design_preset(const std::string& name);
Simulator preset_simulator(const std::string& name);

struct SKOptions {
  int basis_degree = 1;
  int restarts = 10;
  bool predictive = true;  // include interpolated intrinsic variance
};

struct NNOptions {
  TrainConfig train;          // lambda ignored; the grid supplies it
  double lambda_min = 0.1;
  double lambda_max = 100.0;
  int lambda_count = 20;
};

struct ExperimentConfig {
  Simulator simulator = Simulator::mm1;
  DesignSpec design;
  int test_points = 50;  // uniform draws over the simulator domain
  int test_reps = 100;
  std::vector<Method> methods;
  int repetitions = 50;  // N
  double alpha = 0.05;
  double beta = 0.05;
  double train_fraction = 0.6;  // train/validation split for NN methods
  std::uint64_t seed = 0;
  std::string out = "report";
  SKOptions sk;
  NNOptions nn;
  QRFConfig qrf;
  NetworkConfig network;

  void validate() const;  // throws ConfigError
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses the JSON config mirroring ExperimentConfig; either a design
// preset name or explicit points/reps must be given.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct MethodResult {
  std::string method;
  std::vector<double> coverage;       // CR_i per repetition (NaN = failed)
  std::vector<double> width;          // per-repetition mean width
  std::vector<std::string> failures;  // rep index: message
  double runtime_s = 0.0;

  int repetitions() const { return static_cast<int>(coverage.size()); }
  int failed() const { return static_cast<int>(failures.size()); }
  bool fully_failed() const;
  double ep(double alpha) const;  // failed repetitions count as misses
  std::optional<double> iw() const;

  bool operator==(const MethodResult&) const = default;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<MethodResult> results;

  std::string to_json() const;
  static ExperimentReport from_json(const std::string& text);

  // Field-wise equality, runtime included (round-trips are exact).
  bool equals(const ExperimentReport& other) const;
};

// Runs N independent repetitions (in parallel, with per-repetition derived
// seeds): fresh training and test data, every requested method fitted and
// scored, NN selectors sharing one candidate set per repetition.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

enum class ReportFormat { csv, json, markdown };
ReportFormat report_format_from_name(const std::string& name);

// CSV columns method,EP,IW,N,alpha,beta,runtime_s; markdown mirrors the
// two-row-per-method EP/IW table layout. Identical reports render
// bit-identically.
std::string render_report(const ExperimentReport& report, ReportFormat fmt);
void emit_report(const ExperimentReport& report, const std::string& path,
                 ReportFormat fmt);

}  // namespace pimeta
