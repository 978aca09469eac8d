#include "pimeta/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "pimeta/conformal.hpp"
#include "pimeta/kriging.hpp"
#include "pimeta/rng.hpp"
#include "pimeta/validator.hpp"

namespace pimeta {

using nlohmann::json;

Method method_from_name(const std::string& name) {
  if (name == "SK") return Method::SK;
  if (name == "SCP") return Method::SCP;
  if (name == "QRF") return Method::QRF;
  if (name == "SCQR") return Method::SCQR;
  if (name == "NNVA") return Method::NNVA;
  if (name == "NNGN") return Method::NNGN;
  if (name == "NNGU") return Method::NNGU;
  throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::SK: return "SK";
    case Method::SCP: return "SCP";
    case Method::QRF: return "QRF";
    case Method::SCQR: return "SCQR";
    case Method::NNVA: return "NNVA";
    case Method::NNGN: return "NNGN";
    case Method::NNGU: return "NNGU";
  }
  return "?";
}

namespace {

std::vector<double> arange(double start, double step, int count) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) v.push_back(start + step * k);
  return v;
}

bool is_nn_method(Method m) {
  return m == Method::NNVA || m == Method::NNGN || m == Method::NNGU;
}

SelectorMode selector_of(Method m) {
  switch (m) {
    case Method::NNVA: return SelectorMode::naive;
    case Method::NNGN: return SelectorMode::normalized;
    default: return SelectorMode::unnormalized;
  }
}

}  // namespace

DesignSpec design_preset(const std::string& name) {
  if (name == "mm1-design1") return {arange(0.3, 0.1, 7), 50};
  if (name == "mm1-design2") return {arange(0.30, 0.02, 31), 5};
  if (name == "net-design1") return {arange(200.0, 40.0, 11), 50};
  if (name == "net-design2") return {arange(200.0, 10.0, 41), 5};
  throw ConfigError("unknown design preset: " + name);
}

Simulator preset_simulator(const std::string& name) {
  if (name.rfind("mm1", 0) == 0) return Simulator::mm1;
  if (name.rfind("net", 0) == 0) return Simulator::network;
  throw ConfigError("unknown design preset: " + name);
}

void ExperimentConfig::validate() const {
  if (design.points.empty()) throw ConfigError("config: empty design");
  if (design.reps < 1) throw ConfigError("config: design reps must be >= 1");
  if (repetitions < 1) throw ConfigError("config: repetitions must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("config: alpha in (0,1)");
  if (!(beta > 0.0 && beta < 0.5)) throw ConfigError("config: beta in (0,0.5)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("config: train_fraction in (0,1)");
  if (test_points < 1 || test_reps < 1)
    throw ConfigError("config: test design must be nonempty");
  if (methods.empty()) return;  // header-only report is allowed
  if (nn.lambda_count < 1 || !(nn.lambda_min > 0.0) ||
      !(nn.lambda_max >= nn.lambda_min))
    throw ConfigError("config: bad lambda grid");
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["simulator"] = simulator_name(cfg.simulator);
  j["design"] = {{"points", cfg.design.points}, {"reps", cfg.design.reps}};
  j["test"] = {{"points", cfg.test_points}, {"reps", cfg.test_reps}};
  std::vector<std::string> names;
  names.reserve(cfg.methods.size());
  for (Method m : cfg.methods) names.push_back(method_name(m));
  j["methods"] = names;
  j["repetitions"] = cfg.repetitions;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["train_fraction"] = cfg.train_fraction;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["sk"] = {{"basis_degree", cfg.sk.basis_degree},
             {"restarts", cfg.sk.restarts},
             {"predictive", cfg.sk.predictive}};
  j["nn"] = {{"epochs", cfg.nn.train.epochs},
             {"batch_size", cfg.nn.train.batch_size},
             {"step", cfg.nn.train.step},
             {"c0", cfg.nn.train.c0},
             {"hidden", cfg.nn.train.hidden},
             {"lambda_min", cfg.nn.lambda_min},
             {"lambda_max", cfg.nn.lambda_max},
             {"lambda_count", cfg.nn.lambda_count}};
  j["qrf"] = {{"n_trees", cfg.qrf.n_trees}, {"min_leaf", cfg.qrf.min_leaf}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("design") && j["design"].contains("preset")) {
      const auto preset = j["design"]["preset"].get<std::string>();
      cfg.design = design_preset(preset);
      cfg.simulator = preset_simulator(preset);
      if (j["design"].contains("reps"))
        cfg.design.reps = j["design"]["reps"].get<int>();
    } else if (j.contains("design")) {
      cfg.design.points = j["design"].at("points").get<std::vector<double>>();
      cfg.design.reps = j["design"].at("reps").get<int>();
    }
    if (j.contains("simulator"))
      cfg.simulator = simulator_from_name(j["simulator"].get<std::string>());
    if (j.contains("test")) {
      if (j["test"].contains("points"))
        cfg.test_points = j["test"]["points"].get<int>();
      if (j["test"].contains("reps"))
        cfg.test_reps = j["test"]["reps"].get<int>();
    }
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& name : j["methods"])
        cfg.methods.push_back(method_from_name(name.get<std::string>()));
    } else {
      cfg.methods = {Method::SK,   Method::SCP,  Method::QRF, Method::SCQR,
                     Method::NNVA, Method::NNGN, Method::NNGU};
    }
    if (j.contains("repetitions")) cfg.repetitions = j["repetitions"].get<int>();
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
    if (j.contains("train_fraction"))
      cfg.train_fraction = j["train_fraction"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("out")) cfg.out = j["out"].get<std::string>();
    if (j.contains("sk")) {
      const auto& s = j["sk"];
      if (s.contains("basis_degree"))
        cfg.sk.basis_degree = s["basis_degree"].get<int>();
      if (s.contains("restarts")) cfg.sk.restarts = s["restarts"].get<int>();
      if (s.contains("predictive"))
        cfg.sk.predictive = s["predictive"].get<bool>();
    }
    if (j.contains("nn")) {
      const auto& s = j["nn"];
      if (s.contains("epochs")) cfg.nn.train.epochs = s["epochs"].get<int>();
      if (s.contains("batch_size"))
        cfg.nn.train.batch_size = s["batch_size"].get<int>();
      if (s.contains("step")) cfg.nn.train.step = s["step"].get<double>();
      if (s.contains("c0")) cfg.nn.train.c0 = s["c0"].get<double>();
      if (s.contains("hidden")) cfg.nn.train.hidden = s["hidden"].get<int>();
      if (s.contains("lambda_min"))
        cfg.nn.lambda_min = s["lambda_min"].get<double>();
      if (s.contains("lambda_max"))
        cfg.nn.lambda_max = s["lambda_max"].get<double>();
      if (s.contains("lambda_count"))
        cfg.nn.lambda_count = s["lambda_count"].get<int>();
    }
    if (j.contains("qrf")) {
      const auto& s = j["qrf"];
      if (s.contains("n_trees")) cfg.qrf.n_trees = s["n_trees"].get<int>();
      if (s.contains("min_leaf")) cfg.qrf.min_leaf = s["min_leaf"].get<int>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

bool MethodResult::fully_failed() const {
  return repetitions() > 0 &&
         std::all_of(coverage.begin(), coverage.end(),
                     [](double c) { return std::isnan(c); });
}

double MethodResult::ep(double alpha) const {
  if (coverage.empty()) return 0.0;
  int hits = 0;
  for (double c : coverage) {
    if (!std::isnan(c) && c >= 1.0 - alpha) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(coverage.size());
}

std::optional<double> MethodResult::iw() const {
  double total = 0.0;
  int count = 0;
  for (double w : width) {
    if (!std::isnan(w)) {
      total += w;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return total / count;
}

namespace {

struct RepEntry {
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double width = std::numeric_limits<double>::quiet_NaN();
  std::string failure;  // empty = success
  double seconds = 0.0;
};

// 60/40 division for the validation machinery. With multiple replicates
// everywhere the replication budget is split per point, which realizes the
// fraction exactly on the experiment designs and keeps every design point
// in the validation set; single-replicate data fall back to a point-level
// split.
std::pair<ReplicatedDataset, ReplicatedDataset> split_train_validation(
    const ReplicatedDataset& data, double fraction, std::uint64_t seed) {
  const bool replicate_split = std::all_of(
      data.replications.begin(), data.replications.end(), [&](const auto& r) {
        const auto k = static_cast<std::size_t>(
            std::llround(fraction * static_cast<double>(r.size())));
        return k >= 1 && k < r.size();
      });
  if (!replicate_split) return split_disjoint(data, fraction, seed);

  ReplicatedDataset train, val;
  train.points = data.points;
  val.points = data.points;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<double> reps = data.replications[i];
    Rng rng(derive_seed(seed, i));
    for (std::size_t k = reps.size() - 1; k > 0; --k) {
      const auto j = static_cast<std::size_t>(rng.next_u64() % (k + 1));
      std::swap(reps[k], reps[j]);
    }
    const auto cut = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(reps.size())));
    train.replications.emplace_back(reps.begin(),
                                    reps.begin() + static_cast<long>(cut));
    val.replications.emplace_back(reps.begin() + static_cast<long>(cut),
                                  reps.end());
  }
  return {std::move(train), std::move(val)};
}

using RepRow = std::vector<RepEntry>;  // one entry per configured method

// One full repetition: fresh data, every method fitted and scored.
RepRow run_repetition(const ExperimentConfig& cfg, int rep) {
  const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
  RepRow row(cfg.methods.size());

  const ReplicatedDataset train =
      generate_design(cfg.simulator, cfg.design.points, cfg.design.reps,
                      derive_seed(rep_seed, 101), cfg.network);

  Rng test_rng(derive_seed(rep_seed, 102));
  const auto [dom_lo, dom_hi] = simulator_domain(cfg.simulator);
  std::vector<double> test_points;
  test_points.reserve(static_cast<std::size_t>(cfg.test_points));
  for (int k = 0; k < cfg.test_points; ++k)
    test_points.push_back(test_rng.uniform(dom_lo, dom_hi));
  const ReplicatedDataset test =
      generate_design(cfg.simulator, test_points, cfg.test_reps,
                      derive_seed(rep_seed, 103), cfg.network);

  // NN methods share one candidate set and train/validation split.
  const bool any_nn = std::any_of(cfg.methods.begin(), cfg.methods.end(),
                                  is_nn_method);
  CandidateSet candidates;
  ReplicatedDataset nn_validation;
  std::string nn_failure;
  if (any_nn) {
    try {
      auto [tr, val] = split_train_validation(train, cfg.train_fraction,
                                              derive_seed(rep_seed, 108));
      TrainConfig tc = cfg.nn.train;
      tc.seed = derive_seed(rep_seed, 109);
      candidates = train_candidates(
          tr, log_spaced_grid(cfg.nn.lambda_min, cfg.nn.lambda_max,
                              cfg.nn.lambda_count),
          tc);
      nn_validation = std::move(val);
    } catch (const std::exception& e) {
      nn_failure = e.what();
    }
  }

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method method = cfg.methods[mi];
    RepEntry& entry = row[mi];
    const auto started = std::chrono::steady_clock::now();
    try {
      IntervalModelPtr model;
      switch (method) {
        case Method::SK: {
          auto sk = std::make_shared<SKModel>(
              fit_sk(train, cfg.sk.basis_degree, cfg.sk.restarts,
                     derive_seed(rep_seed, 104)));
          model = std::make_shared<SKIntervalModel>(std::move(sk), cfg.alpha,
                                                    cfg.sk.predictive);
          break;
        }
        case Method::SCP: {
          model = split_conformal(train, mlp_base_regressor(cfg.nn.train),
                                  cfg.alpha, derive_seed(rep_seed, 105));
          break;
        }
        case Method::QRF: {
          const FlatData flat = flatten(train);
          QRFConfig qc = cfg.qrf;
          qc.seed = derive_seed(rep_seed, 106);
          model = std::make_shared<QRFIntervalModel>(
              fit_qrf(flat.xs, flat.ys, qc), cfg.alpha);
          break;
        }
        case Method::SCQR: {
          model = split_cqr(train, qrf_base_quantile(cfg.qrf), cfg.alpha,
                            derive_seed(rep_seed, 107));
          break;
        }
        default: {
          if (!nn_failure.empty()) throw std::runtime_error(nn_failure);
          SelectionConfig sc;
          sc.target_levels = {1.0 - cfg.alpha};
          sc.beta = cfg.beta;
          sc.seed = derive_seed(rep_seed, 110);
          const SelectionResult sel =
              select(candidates, nn_validation, sc, selector_of(method));
          if (!sel.levels.front().feasible)
            throw std::runtime_error("no feasible candidate at level " +
                                     std::to_string(1.0 - cfg.alpha));
          model = candidates.share(
              static_cast<std::size_t>(sel.levels.front().index));
          break;
        }
      }
      const CoverageWidth cw = coverage_and_width(*model, test);
      entry.coverage = cw.coverage;
      entry.width = cw.width;
    } catch (const std::exception& e) {
      entry.failure = e.what();
    }
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
  }
  return row;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.repetitions;
  std::vector<RepRow> rows(static_cast<std::size_t>(n));

  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(n)));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int rep = next.fetch_add(1);
        if (rep >= n) break;
        rows[static_cast<std::size_t>(rep)] = run_repetition(cfg, rep);
      }
    });
  }
  for (auto& t : pool) t.join();

  ExperimentReport report;
  report.config = cfg;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    MethodResult res;
    res.method = method_name(cfg.methods[mi]);
    for (int rep = 0; rep < n; ++rep) {
      const RepEntry& e = rows[static_cast<std::size_t>(rep)][mi];
      res.coverage.push_back(e.coverage);
      res.width.push_back(e.width);
      res.runtime_s += e.seconds;
      if (!e.failure.empty())
        res.failures.push_back("rep " + std::to_string(rep) + ": " + e.failure);
    }
    report.results.push_back(std::move(res));
  }
  return report;
}

namespace {

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string fmt_or_na(const std::optional<double>& v) {
  return v ? fmt(*v) : std::string("n/a");
}

// Best-method rule: smallest IW among methods reaching EP >= 0.95,
// otherwise the highest EP.
int best_method_index(const ExperimentReport& report) {
  const double alpha = report.config.alpha;
  int best = -1;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    if (r.fully_failed() || !r.iw()) continue;
    if (r.ep(alpha) < 0.95) continue;
    if (best < 0 || *r.iw() < *report.results[static_cast<std::size_t>(best)].iw())
      best = static_cast<int>(i);
  }
  if (best >= 0) return best;
  double top_ep = -1.0;
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    if (r.fully_failed()) continue;
    if (r.ep(alpha) > top_ep) {
      top_ep = r.ep(alpha);
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

std::string ExperimentReport::to_json() const {
  json j;
  j["config"] = config_to_json(config);
  j["results"] = json::array();
  for (const auto& r : results) {
    json e;
    e["method"] = r.method;
    e["ep"] = r.ep(config.alpha);
    if (r.iw())
      e["iw"] = *r.iw();
    else
      e["iw"] = nullptr;
    // NaNs are not representable in JSON; per-rep gaps are encoded as null.
    json cov = json::array(), wid = json::array();
    for (double c : r.coverage)
      cov.push_back(std::isnan(c) ? json(nullptr) : json(c));
    for (double w : r.width)
      wid.push_back(std::isnan(w) ? json(nullptr) : json(w));
    e["coverage"] = cov;
    e["width"] = wid;
    e["failures"] = r.failures;
    e["runtime_s"] = r.runtime_s;
    j["results"].push_back(e);
  }
  return j.dump(2);
}

ExperimentReport ExperimentReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentReport report;
  report.config = config_from_json(j.at("config"));
  for (const auto& e : j.at("results")) {
    MethodResult r;
    r.method = e.at("method").get<std::string>();
    for (const auto& c : e.at("coverage"))
      r.coverage.push_back(c.is_null()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : c.get<double>());
    for (const auto& w : e.at("width"))
      r.width.push_back(w.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                    : w.get<double>());
    r.failures = e.at("failures").get<std::vector<std::string>>();
    r.runtime_s = e.at("runtime_s").get<double>();
    report.results.push_back(std::move(r));
  }
  return report;
}

bool ExperimentReport::equals(const ExperimentReport& other) const {
  return to_json() == other.to_json();
}

std::string render_report(const ExperimentReport& report, ReportFormat fmt_kind) {
  const double alpha = report.config.alpha;
  if (fmt_kind == ReportFormat::json) return report.to_json();

  if (fmt_kind == ReportFormat::csv) {
    std::string out = "method,EP,IW,N,alpha,beta,runtime_s\n";
    for (const auto& r : report.results) {
      const bool dead = r.fully_failed();
      out += r.method + ',';
      out += dead ? "n/a" : fmt(r.ep(alpha));
      out += ',';
      out += dead ? "n/a" : fmt_or_na(r.iw());
      out += ',' + std::to_string(report.config.repetitions);
      out += ',' + fmt(alpha);
      out += ',' + fmt(report.config.beta);
      out += ',' + fmt(r.runtime_s, "%.3f") + '\n';
    }
    return out;
  }

  // Markdown, one EP/IW column pair per method like the source tables.
  const int best = best_method_index(report);
  std::string head = "| Design |";
  std::string rule = "|---|";
  std::string row = "| " + simulator_name(report.config.simulator) + " n=" +
                    std::to_string(report.config.design.points.size()) +
                    " r=" + std::to_string(report.config.design.reps) + " |";
  for (std::size_t i = 0; i < report.results.size(); ++i) {
    const auto& r = report.results[i];
    head += ' ' + r.method + " EP | " + r.method + " IW |";
    rule += "---|---|";
    const bool dead = r.fully_failed();
    std::string ep = dead ? "n/a" : fmt(r.ep(alpha), "%.2f");
    std::string iw = dead ? "n/a" : (r.iw() ? fmt(*r.iw(), "%.4g") : "n/a");
    if (static_cast<int>(i) == best) {
      ep = "**" + ep + "**";
      iw = "**" + iw + "**";
    }
    row += ' ' + ep + " | " + iw + " |";
  }
  return head + '\n' + rule + '\n' + row + '\n';
}

ReportFormat report_format_from_name(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  throw ConfigError("unknown report format: " + name);
}

void emit_report(const ExperimentReport& report, const std::string& path,
                 ReportFormat fmt_kind) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open report path: " + path);
  out << render_report(report, fmt_kind);
  if (!out) throw std::runtime_error("report write failed: " + path);
}

}  // namespace pimeta
