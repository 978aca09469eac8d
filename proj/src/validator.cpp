#include "pimeta/validator.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pimeta/rng.hpp"

namespace pimeta {

std::string selector_mode_name(SelectorMode mode) {
  switch (mode) {
    case SelectorMode::normalized:
      return "normalized";
    case SelectorMode::unnormalized:
      return "unnormalized";
    case SelectorMode::naive:
      return "naive";
  }
  return "?";
}

CoverageStats coverage_matrix(const CandidateSet& candidates,
                              const ReplicatedDataset& validation) {
  validation.validate();
  if (candidates.size() == 0)
    throw std::invalid_argument("validator: empty candidate set");
  if (validation.size() == 0)
    throw std::invalid_argument("validator: empty validation data");
  if (!validation.equal_replications())
    throw std::invalid_argument("validator requires equal replications");

  const auto n = static_cast<Eigen::Index>(validation.size());
  const auto m = static_cast<Eigen::Index>(candidates.size());

  CoverageStats stats;
  stats.n_points = validation.size();
  stats.hits.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const IntervalModel& model = candidates.at(static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      const Interval iv = model.eval(validation.points[idx]);
      double hit = 0.0;
      for (double y : validation.replications[idx]) {
        if (y >= iv.lower && y <= iv.upper) hit += 1.0;
      }
      stats.hits(i, j) =
          hit / static_cast<double>(validation.replications[idx].size());
    }
  }
  stats.coverage = stats.hits.colwise().mean().transpose();
  const Eigen::MatrixXd centered = stats.hits.rowwise() - stats.coverage.transpose();
  stats.covariance =
      (centered.transpose() * centered) / static_cast<double>(n);
  return stats;
}

double gaussian_sup_quantile(const Eigen::MatrixXd& cov, double beta,
                             SelectorMode mode, int mc, std::uint64_t seed) {
  if (mode == SelectorMode::naive)
    throw std::invalid_argument("gaussian_sup_quantile: naive mode has no margin");
  if (cov.rows() != cov.cols() || cov.rows() == 0)
    throw std::invalid_argument("gaussian_sup_quantile: covariance not square");
  if (!(beta > 0.0 && beta < 0.5))
    throw std::invalid_argument("gaussian_sup_quantile: beta must lie in (0,0.5)");
  if (mc < 10000)
    throw std::invalid_argument("gaussian_sup_quantile: need >= 1e4 samples");

  const Eigen::Index m = cov.rows();
  std::vector<double> sigma(static_cast<std::size_t>(m));
  bool any_positive = false;
  for (Eigen::Index j = 0; j < m; ++j) {
    sigma[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, cov(j, j)));
    if (sigma[static_cast<std::size_t>(j)] > 0.0) any_positive = true;
  }
  if (mode == SelectorMode::normalized && !any_positive) {
    std::cerr << "warning: all candidate coverage variances are zero; "
                 "validation margin degenerates to 0\n";
    return 0.0;
  }

  // PSD projection: clip negative eigenvalues (at most rounding-level mass)
  // and factor as V sqrt(D).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (cov + cov.transpose()));
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("gaussian_sup_quantile: eigendecomposition failed");
  Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd factor =
      eig.eigenvectors() * evals.cwiseSqrt().asDiagonal();

  Rng rng(seed);
  Eigen::VectorXd g(m);
  std::vector<double> maxima;
  maxima.reserve(static_cast<std::size_t>(mc));
  for (int s = 0; s < mc; ++s) {
    for (Eigen::Index k = 0; k < m; ++k) g(k) = rng.normal();
    const Eigen::VectorXd z = factor * g;
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m; ++j) {
      const double sj = sigma[static_cast<std::size_t>(j)];
      if (mode == SelectorMode::normalized) {
        if (sj > 0.0) best = std::max(best, z(j) / sj);
      } else {
        best = std::max(best, z(j));
      }
    }
    maxima.push_back(best);
  }
  return empirical_quantile(std::move(maxima), 1.0 - beta);
}

SelectionResult select(const CandidateSet& candidates,
                       const ReplicatedDataset& validation,
                       const SelectionConfig& cfg, SelectorMode mode) {
  for (double level : cfg.target_levels) {
    if (!(level > 0.0 && level < 1.0))
      throw std::invalid_argument("select: target levels must lie in (0,1)");
  }
  const CoverageStats stats = coverage_matrix(candidates, validation);
  const auto m = static_cast<std::size_t>(candidates.size());

  // Validation average width per candidate (mean absolute width).
  std::vector<double> widths(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const IntervalModel& model = candidates.at(j);
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const Interval iv = model.eval(validation.points[i]);
      widths[j] += std::abs(iv.upper - iv.lower);
    }
    widths[j] /= static_cast<double>(validation.size());
  }

  SelectionResult result;
  result.mode = mode;
  result.sup_quantile =
      mode == SelectorMode::naive
          ? 0.0
          : gaussian_sup_quantile(stats.covariance, cfg.beta, mode,
                                  cfg.mc_samples, derive_seed(cfg.seed, 31));

  const double root_n = std::sqrt(static_cast<double>(stats.n_points));
  for (double level : cfg.target_levels) {
    LevelSelection pick;
    pick.target_level = level;
    for (std::size_t j = 0; j < m; ++j) {
      double margin = 0.0;
      if (mode == SelectorMode::normalized) {
        margin = result.sup_quantile * stats.sigma(j) / root_n;
      } else if (mode == SelectorMode::unnormalized) {
        margin = result.sup_quantile / root_n;
      }
      const double cr = stats.coverage(static_cast<Eigen::Index>(j));
      if (cr < level + margin) continue;
      if (!pick.feasible || widths[j] < pick.width) {
        pick.feasible = true;
        pick.index = static_cast<int>(j);
        pick.coverage = cr;
        pick.width = widths[j];
        pick.margin = margin;
      }
    }
    result.levels.push_back(pick);
  }
  return result;
}

std::string SelectionResult::to_json() const {
  nlohmann::json j;
  j["mode"] = selector_mode_name(mode);
  j["sup_quantile"] = sup_quantile;
  j["levels"] = nlohmann::json::array();
  for (const auto& lv : levels) {
    nlohmann::json e;
    e["target_level"] = lv.target_level;
    e["feasible"] = lv.feasible;
    if (lv.feasible) {
      e["index"] = lv.index;
      e["coverage"] = lv.coverage;
      e["width"] = lv.width;
      e["margin"] = lv.margin;
    }
    j["levels"].push_back(e);
  }
  return j.dump(2);
}

}  // namespace pimeta
