#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pimeta/dataset.hpp"

namespace pimeta {

// Gaussian-process trend/covariance hyperparameters plus the per-design-
// point intrinsic variances estimated from the replicates.
struct SKHyperparams {
  Eigen::VectorXd beta;           // trend coefficients for f(x)^T beta
  double tau2 = 1.0;              // process variance, > 0
  double theta = 1.0;             // squared-exponential lengthscale, > 0
  Eigen::VectorXd intrinsic_var;  // c_i >= 0, per-replicate variance
  int basis_degree = 1;
};

// Polynomial basis evaluated at x: 1, then x_k^p for p = 1..degree.
Eigen::VectorXd sk_basis(const std::vector<double>& x, int degree);

struct SKFitInfo {
  double log_likelihood = 0.0;            // at the returned hyperparameters
  std::vector<double> restart_initial;    // log-likelihood at each start
  double nugget = 0.0;                    // jitter added to factor Sigma
};

// Fitted model: hyperparameters, design data, and the Cholesky factor of
// Sigma = tau2*R_theta + diag(c_i/r_i) (+ nugget). Immutable after
// construction; posterior evaluation is safe to call concurrently.
class SKModel {
 public:
  // Assembles and factors the joint covariance from given hyperparameters.
  // reps[i] is r_i, the replication count behind ybar[i].
  SKModel(SKHyperparams params, std::vector<std::vector<double>> design,
          Eigen::VectorXd ybar, std::vector<int> reps);

  // Posterior mean and variance of the response surface at a point.
  // Variance is prior-minus-explained, clamped at zero from below.
  void posterior(const std::vector<double>& x, double& mean,
                 double& var) const;

  // Symmetric (1-alpha) interval mean -/+ z_{1-alpha/2} * posterior sd.
  Interval interval(const std::vector<double>& x, double alpha) const;

  // Kernel-weighted interpolation of the estimated intrinsic variances;
  // used when a predictive (aleatoric-inflated) interval is requested.
  double intrinsic_at(const std::vector<double>& x) const;
  Interval predictive_interval(const std::vector<double>& x,
                               double alpha) const;

  const SKHyperparams& params() const { return params_; }
  const SKFitInfo& fit_info() const { return info_; }
  SKFitInfo& mutable_fit_info() { return info_; }
  std::size_t design_size() const { return design_.size(); }
  double log_likelihood() const;

  std::string to_json() const;

 private:
  double kernel(const std::vector<double>& a,
                const std::vector<double>& b) const;
  Eigen::VectorXd cross_covariance(const std::vector<double>& x) const;

  SKHyperparams params_;
  std::vector<std::vector<double>> design_;
  Eigen::VectorXd ybar_;
  std::vector<int> reps_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;     // Sigma^{-1} (ybar - F beta)
  Eigen::VectorXd trend_;     // F beta at the design
  SKFitInfo info_;
};

// Maximum-likelihood fit: sample variances plug in the intrinsic noise,
// (tau2, theta) come from a multi-start Nelder-Mead search in log space
// with beta profiled out by generalized least squares.
// Requires r_i >= 2 everywhere and n >= number of basis terms.
SKModel fit_sk(const ReplicatedDataset& train, int basis_degree, int restarts,
               std::uint64_t seed);

// IntervalModel adapter. When predictive is true the interval uses
// posterior variance plus the interpolated intrinsic variance, which is
// what a new simulation output at x needs; otherwise it brackets the
// response surface only.
class SKIntervalModel final : public IntervalModel {
 public:
  SKIntervalModel(std::shared_ptr<const SKModel> model, double alpha,
                  bool predictive)
      : model_(std::move(model)), alpha_(alpha), predictive_(predictive) {}
  Interval eval(const std::vector<double>& x) const override;
  std::string label() const override;

 private:
  std::shared_ptr<const SKModel> model_;
  double alpha_;
  bool predictive_;
};

}  // namespace pimeta
