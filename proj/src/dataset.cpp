#include "pimeta/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pimeta/rng.hpp"

namespace pimeta {

std::size_t ReplicatedDataset::total_outputs() const {
  std::size_t total = 0;
  for (const auto& reps : replications) total += reps.size();
  return total;
}

std::vector<double> ReplicatedDataset::point_means() const {
  std::vector<double> means;
  means.reserve(replications.size());
  for (const auto& reps : replications) {
    means.push_back(std::accumulate(reps.begin(), reps.end(), 0.0) /
                    static_cast<double>(reps.size()));
  }
  return means;
}

bool ReplicatedDataset::equal_replications() const {
  if (replications.empty()) return true;
  const std::size_t r = replications.front().size();
  return std::all_of(replications.begin(), replications.end(),
                     [r](const auto& v) { return v.size() == r; });
}

void ReplicatedDataset::validate() const {
  if (points.size() != replications.size())
    throw std::invalid_argument("dataset: points/replications length mismatch");
  const std::size_t d = dim();
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d)
      throw std::invalid_argument("dataset: ragged point dimension at index " +
                                  std::to_string(i));
    if (replications[i].empty())
      throw std::invalid_argument("dataset: point " + std::to_string(i) +
                                  " has no replications");
  }
}

FlatData flatten(const ReplicatedDataset& data) {
  FlatData flat;
  flat.xs.reserve(data.total_outputs());
  flat.ys.reserve(data.total_outputs());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double y : data.replications[i]) {
      flat.xs.push_back(data.points[i]);
      flat.ys.push_back(y);
    }
  }
  return flat;
}

void CandidateSet::add(IntervalModelPtr model) {
  if (!model) throw std::invalid_argument("candidate set: null model");
  for (const auto& existing : models_) {
    if (existing->label() == model->label())
      throw std::invalid_argument("candidate set: duplicate label '" +
                                  model->label() + "'");
  }
  models_.push_back(std::move(model));
}

double CoverageStats::sigma(std::size_t j) const {
  return std::sqrt(std::max(0.0, covariance(static_cast<Eigen::Index>(j),
                                            static_cast<Eigen::Index>(j))));
}

std::pair<ReplicatedDataset, ReplicatedDataset> split_disjoint(
    const ReplicatedDataset& data, double fraction, std::uint64_t seed) {
  data.validate();
  const std::size_t n = data.size();
  if (n < 2) throw std::invalid_argument("split: need at least 2 points");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split: fraction must lie in (0,1)");
  const auto first_size = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(n)));
  if (first_size == 0 || first_size == n)
    throw std::invalid_argument("degenerate split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with our own uniform draws for cross-platform determinism.
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(order[i], order[j]);
  }

  ReplicatedDataset first, second;
  for (std::size_t k = 0; k < n; ++k) {
    auto& part = (k < first_size) ? first : second;
    part.points.push_back(data.points[order[k]]);
    part.replications.push_back(data.replications[order[k]]);
  }
  return {std::move(first), std::move(second)};
}

double empirical_quantile(std::vector<double> values, double level) {
  if (values.empty())
    throw std::invalid_argument("empirical_quantile: empty values");
  if (!(level > 0.0))
    throw std::invalid_argument("empirical_quantile: level must be > 0");
  const auto s = static_cast<double>(values.size());
  double t = level * s;
  // Rational levels such as (1-a)(1+1/s) land on integers up to rounding;
  // snap before the ceiling so the rule stays exact.
  if (std::abs(t - std::round(t)) < 1e-9) t = std::round(t);
  const double k = std::ceil(t);
  if (k > s) return std::numeric_limits<double>::infinity();
  const auto idx = static_cast<std::size_t>(k) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(idx),
                   values.end());
  return values[idx];
}

CoverageWidth coverage_and_width(const IntervalModel& model,
                                 const ReplicatedDataset& test) {
  test.validate();
  if (test.size() == 0)
    throw std::invalid_argument("coverage_and_width: empty test set");
  double cover = 0.0;
  double width = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Interval iv = model.eval(test.points[i]);
    double hits = 0.0;
    for (double y : test.replications[i]) {
      if (y >= iv.lower && y <= iv.upper) hits += 1.0;
    }
    cover += hits / static_cast<double>(test.replications[i].size());
    width += iv.upper - iv.lower;
  }
  const auto n = static_cast<double>(test.size());
  return {cover / n, width / n};
}

namespace {
std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

void save_csv(const ReplicatedDataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "point_id";
  for (std::size_t k = 0; k < data.dim(); ++k) out << ",x_" << (k + 1);
  out << ",rep_id,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.replications[i].size(); ++j) {
      out << i;
      for (double c : data.points[i]) out << ',' << format_double(c);
      out << ',' << j << ',' << format_double(data.replications[i][j]) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ReplicatedDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty dataset file: " + path);
  std::size_t columns = 1 + static_cast<std::size_t>(std::count(
                                line.begin(), line.end(), ','));
  if (columns < 4)
    throw std::runtime_error("dataset header needs point_id,x_*,rep_id,y");
  const std::size_t d = columns - 3;

  ReplicatedDataset data;
  long last_id = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::vector<double> fields;
    while (std::getline(row, cell, ',')) fields.push_back(std::stod(cell));
    if (fields.size() != columns)
      throw std::runtime_error("dataset row has wrong column count");
    const long id = static_cast<long>(fields[0]);
    std::vector<double> x(fields.begin() + 1,
                          fields.begin() + 1 + static_cast<long>(d));
    const double y = fields.back();
    if (id != last_id) {
      if (id != last_id + 1)
        throw std::runtime_error("dataset rows must be grouped by point_id");
      data.points.push_back(std::move(x));
      data.replications.emplace_back();
      last_id = id;
    }
    data.replications.back().push_back(y);
  }
  data.validate();
  return data;
}

}  // namespace pimeta
