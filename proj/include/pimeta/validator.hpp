#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pimeta/dataset.hpp"

namespace pimeta {

enum class SelectorMode { normalized, unnormalized, naive };

std::string selector_mode_name(SelectorMode mode);

struct SelectionConfig {
  std::vector<double> target_levels{0.95};  // 1 - alpha_k
  double beta = 0.05;                       // confidence 1 - beta
  int mc_samples = 100000;                  // Gaussian-sup quantile draws
  std::uint64_t seed = 0;
};

// Per target level: the chosen model or an explicit infeasible flag.
struct LevelSelection {
  double target_level = 0.0;
  bool feasible = false;
  int index = -1;
  double coverage = 0.0;
  double width = 0.0;
  double margin = 0.0;
};

struct SelectionResult {
  SelectorMode mode = SelectorMode::naive;
  double sup_quantile = 0.0;  // 0 in naive mode
  std::vector<LevelSelection> levels;

  std::string to_json() const;
};

// Hit rates W_i^{(j)}, empirical coverages and their sample covariance on
// the validation data. Requires equal replication counts across points.
CoverageStats coverage_matrix(const CandidateSet& candidates,
                              const ReplicatedDataset& validation);

// (1-beta)-quantile of max_j Z_j / sigma_j (normalized, skipping zero-
// variance coordinates) or max_j Z_j (unnormalized) for Z ~ N(0, cov),
// estimated from mc Monte-Carlo draws. Tiny negative eigenvalues are
// clipped to zero before factoring. Returns 0 with a warning when every
// sigma_j is zero in normalized mode.
double gaussian_sup_quantile(const Eigen::MatrixXd& cov, double beta,
                             SelectorMode mode, int mc, std::uint64_t seed);

// For each target level, the narrowest candidate whose empirical coverage
// clears the level plus the mode's margin; ties break to the smaller
// index, empty feasible sets are reported as infeasible.
SelectionResult select(const CandidateSet& candidates,
                       const ReplicatedDataset& validation,
                       const SelectionConfig& cfg, SelectorMode mode);

}  // namespace pimeta
