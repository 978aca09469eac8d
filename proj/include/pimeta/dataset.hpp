#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace pimeta {

// Design points x_i with r_i replicated simulator outputs y_{i,1..r_i}.
// The universal data carrier: immutable in spirit, validate() checks the
// structural invariants after construction or file load.
struct ReplicatedDataset {
  std::vector<std::vector<double>> points;        // n rows of dimension d
  std::vector<std::vector<double>> replications;  // row i holds y_{i,1..r_i}

  std::size_t size() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }
  std::size_t total_outputs() const;
  // Sample mean of the replicates at each point.
  std::vector<double> point_means() const;
  // True when every point carries the same number of replicates.
  bool equal_replications() const;

  // Throws std::invalid_argument when the structure is inconsistent
  // (length mismatch, empty replicate list, ragged point dimensions).
  void validate() const;

  bool operator==(const ReplicatedDataset&) const = default;
};

// Flattened (x, y) pairs, one per replicate. Order: point-major, then
// replicate index.
struct FlatData {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
};
FlatData flatten(const ReplicatedDataset& data);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// An evaluable map x -> [L(x), U(x)]. Every method produces one; metrics
// and validators consume them. Implementations must return lower <= upper
// (upper may be +inf in degenerate conformal cases).
class IntervalModel {
 public:
  virtual ~IntervalModel() = default;
  virtual Interval eval(const std::vector<double>& x) const = 0;
  // Descriptive label: method name plus hyperparameters.
  virtual std::string label() const = 0;
};

using IntervalModelPtr = std::shared_ptr<const IntervalModel>;

// Wraps a callable as an IntervalModel; handy for tests and adapters.
class FunctionalIntervalModel final : public IntervalModel {
 public:
  using Fn = std::function<Interval(const std::vector<double>&)>;
  FunctionalIntervalModel(Fn fn, std::string label)
      : fn_(std::move(fn)), label_(std::move(label)) {}
  Interval eval(const std::vector<double>& x) const override { return fn_(x); }
  std::string label() const override { return label_; }

 private:
  Fn fn_;
  std::string label_;
};

// m trained interval models entering validation. Labels must be unique.
class CandidateSet {
 public:
  void add(IntervalModelPtr model);
  std::size_t size() const { return models_.size(); }
  const IntervalModel& at(std::size_t j) const { return *models_[j]; }
  IntervalModelPtr share(std::size_t j) const { return models_[j]; }
  const std::vector<IntervalModelPtr>& models() const { return models_; }

 private:
  std::vector<IntervalModelPtr> models_;
};

// Per-point averaged hit rates and their sample covariance over a
// validation set, for m candidate models.
struct CoverageStats {
  Eigen::MatrixXd hits;        // n_v x m, entry (i,j) = W_i^{(j)} in [0,1]
  Eigen::VectorXd coverage;    // m, empirical coverage CR_j (column means)
  Eigen::MatrixXd covariance;  // m x m sample covariance (1/n_v normalized)
  std::size_t n_points = 0;    // n_v

  double sigma(std::size_t j) const;  // sqrt of the j-th diagonal entry
};

// Point-level partition into parts of round(fraction*n) and the rest;
// all replicates of a point stay together. Deterministic given seed.
// Throws std::invalid_argument on a degenerate (empty-part) split.
std::pair<ReplicatedDataset, ReplicatedDataset> split_disjoint(
    const ReplicatedDataset& data, double fraction, std::uint64_t seed);

// The ceil(level*s)-th smallest element of values (1-indexed); +inf when
// ceil(level*s) exceeds s, the degenerate conformal case. level*s values
// within 1e-9 of an integer snap to it before the ceiling is taken.
double empirical_quantile(std::vector<double> values, double level);

struct CoverageWidth {
  double coverage = 0.0;  // replicate-averaged hit rate, boundary inclusive
  double width = 0.0;     // mean of U - L over points
};
CoverageWidth coverage_and_width(const IntervalModel& model,
                                 const ReplicatedDataset& test);

// CSV columns: point_id,x_1..x_d,rep_id,y. Doubles are written with
// round-trip precision so save/load is lossless.
void save_csv(const ReplicatedDataset& data, const std::string& path);
ReplicatedDataset load_csv(const std::string& path);

}  // namespace pimeta
