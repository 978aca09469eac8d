#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pimeta/conformal.hpp"
#include "pimeta/dataset.hpp"

namespace pimeta {

// Single-hidden-layer perceptron parameters stored flat:
// W1 (hidden x input), b1, W2 (outputs x hidden), b2. Hidden activation is
// tanh; output heads are raw (the caller interprets them).
struct MlpParams {
  int input_dim = 1;
  int hidden = 20;
  int outputs = 2;
  std::vector<double> values;

  std::size_t count() const;
  static MlpParams random_init(int input_dim, int hidden, int outputs,
                               std::uint64_t seed);

  // Offsets into `values`.
  std::size_t w1(int h, int d) const;
  std::size_t b1(int h) const;
  std::size_t w2(int o, int h) const;
  std::size_t b2(int o) const;
};

// Forward pass. For the interval head (outputs == 2) the raw pair (a, b)
// maps to L = a, U = a + softplus(b), so L <= U holds structurally.
void mlp_forward(const MlpParams& p, const std::vector<double>& x,
                 std::vector<double>& raw_out);
Interval mlp_interval_output(const MlpParams& p, const std::vector<double>& x);

struct TrainConfig {
  double lambda = 1.0;  // coverage multiplier, >= 0
  double c0 = 50.0;     // sigmoid softening constant, > 0
  int epochs = 2000;
  int batch_size = 32;
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int hidden = 20;
  std::uint64_t seed = 0;
};

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

// Mean width plus lambda times the replicate-averaged sigmoid-softened
// miss penalty, over the given batch, with the full backpropagated
// gradient. The batch is consumed as-is; training standardizes before
// calling this.
LossGrad soft_loss(const MlpParams& params, const ReplicatedDataset& batch,
                   double lambda, double c0);

// Mean squared error of the single-output head against flattened pairs.
LossGrad mse_loss(const MlpParams& params,
                  const std::vector<std::vector<double>>& xs,
                  const std::vector<double>& ys);

// Per-coordinate affine standardization (z = (v - mean) / scale).
struct AffineScaler {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> apply(const std::vector<double>& v) const;
};

// Interval network trained on the softened Lagrangian. Inputs and
// responses are standardized internally; eval maps back to raw scale.
class MlpIntervalModel final : public IntervalModel {
 public:
  MlpIntervalModel(MlpParams params, AffineScaler x_scaler, double y_mean,
                   double y_scale, double lambda);
  Interval eval(const std::vector<double>& x) const override;
  std::string label() const override;

  double lambda() const { return lambda_; }
  const MlpParams& params() const { return params_; }
  const AffineScaler& x_scaler() const { return x_scaler_; }
  double y_mean() const { return y_mean_; }
  double y_scale() const { return y_scale_; }

  std::string to_json() const;
  static MlpIntervalModel from_json(const std::string& text);

 private:
  MlpParams params_;
  AffineScaler x_scaler_;
  double y_mean_ = 0.0, y_scale_ = 1.0;
  double lambda_ = 0.0;
};

// Adam over epochs x mini-batches of points on soft_loss. Throws
// std::runtime_error naming lambda if the loss stops being finite.
// loss_history, when given, receives the full-data loss after each epoch.
std::shared_ptr<MlpIntervalModel> train_pi_network(
    const ReplicatedDataset& train, const TrainConfig& cfg,
    std::vector<double>* loss_history = nullptr);

// One model per lambda with per-entry derived seeds, trained in parallel,
// order preserved. Duplicate lambdas are rejected.
CandidateSet train_candidates(const ReplicatedDataset& train,
                              const std::vector<double>& lambda_grid,
                              const TrainConfig& cfg);

// Evenly log-spaced grid, the default candidate ladder.
std::vector<double> log_spaced_grid(double lo, double hi, int count);

// Point-regression network (MSE head), the split-conformal base.
class MlpRegressor {
 public:
  MlpRegressor(MlpParams params, AffineScaler x_scaler, double y_mean,
               double y_scale);
  double predict(const std::vector<double>& x) const;

 private:
  MlpParams params_;
  AffineScaler x_scaler_;
  double y_mean_ = 0.0, y_scale_ = 1.0;
};

MlpRegressor fit_regression_mlp(const std::vector<std::vector<double>>& xs,
                                const std::vector<double>& ys,
                                const TrainConfig& cfg,
                                std::vector<double>* loss_history = nullptr);

// BaseRegressor adapter: flattens the fit data and trains the MSE network.
BaseRegressor mlp_base_regressor(const TrainConfig& cfg);

}  // namespace pimeta
