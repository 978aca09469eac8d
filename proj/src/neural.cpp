#include "pimeta/neural.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pimeta/rng.hpp"

namespace pimeta {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

struct Forward {
  std::vector<double> hidden;  // tanh activations
  std::vector<double> raw;     // linear outputs
};

void forward_pass(const MlpParams& p, const std::vector<double>& x,
                  Forward& f) {
  f.hidden.assign(static_cast<std::size_t>(p.hidden), 0.0);
  f.raw.assign(static_cast<std::size_t>(p.outputs), 0.0);
  for (int h = 0; h < p.hidden; ++h) {
    double z = p.values[p.b1(h)];
    for (int d = 0; d < p.input_dim; ++d)
      z += p.values[p.w1(h, d)] * x[static_cast<std::size_t>(d)];
    f.hidden[static_cast<std::size_t>(h)] = std::tanh(z);
  }
  for (int o = 0; o < p.outputs; ++o) {
    double z = p.values[p.b2(o)];
    for (int h = 0; h < p.hidden; ++h)
      z += p.values[p.w2(o, h)] * f.hidden[static_cast<std::size_t>(h)];
    f.raw[static_cast<std::size_t>(o)] = z;
  }
}

// Accumulates parameter gradients for one input given dloss/draw.
void backward_pass(const MlpParams& p, const std::vector<double>& x,
                   const Forward& f, const std::vector<double>& dout,
                   std::vector<double>& grad) {
  for (int h = 0; h < p.hidden; ++h) {
    double gh = 0.0;
    for (int o = 0; o < p.outputs; ++o) {
      const double go = dout[static_cast<std::size_t>(o)];
      grad[p.w2(o, h)] += go * f.hidden[static_cast<std::size_t>(h)];
      gh += go * p.values[p.w2(o, h)];
    }
    const double th = f.hidden[static_cast<std::size_t>(h)];
    const double gpre = gh * (1.0 - th * th);
    grad[p.b1(h)] += gpre;
    for (int d = 0; d < p.input_dim; ++d)
      grad[p.w1(h, d)] += gpre * x[static_cast<std::size_t>(d)];
  }
  for (int o = 0; o < p.outputs; ++o)
    grad[p.b2(o)] += dout[static_cast<std::size_t>(o)];
}

AffineScaler fit_x_scaler(const std::vector<std::vector<double>>& points) {
  const std::size_t d = points.front().size();
  AffineScaler s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  for (const auto& x : points)
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += x[k];
  for (std::size_t k = 0; k < d; ++k)
    s.mean[k] /= static_cast<double>(points.size());
  std::vector<double> var(d, 0.0);
  for (const auto& x : points)
    for (std::size_t k = 0; k < d; ++k)
      var[k] += (x[k] - s.mean[k]) * (x[k] - s.mean[k]);
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k] / static_cast<double>(points.size()));
    s.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

void fit_y_scaler(const std::vector<double>& ys, double& mean, double& scale) {
  mean = std::accumulate(ys.begin(), ys.end(), 0.0) /
         static_cast<double>(ys.size());
  double var = 0.0;
  for (double y : ys) var += (y - mean) * (y - mean);
  const double sd = std::sqrt(var / static_cast<double>(ys.size()));
  scale = sd > 1e-12 ? sd : 1.0;
}

struct Adam {
  std::vector<double> m, v;
  double beta1, beta2, step, eps;
  int t = 0;

  Adam(std::size_t n, const TrainConfig& cfg)
      : m(n, 0.0),
        v(n, 0.0),
        beta1(cfg.beta1),
        beta2(cfg.beta2),
        step(cfg.step),
        eps(cfg.eps) {}

  void update(std::vector<double>& params, const std::vector<double>& grad) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= step * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size() - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
}

}  // namespace

std::size_t MlpParams::count() const {
  return static_cast<std::size_t>(hidden * input_dim + hidden +
                                  outputs * hidden + outputs);
}

std::size_t MlpParams::w1(int h, int d) const {
  return static_cast<std::size_t>(h * input_dim + d);
}
std::size_t MlpParams::b1(int h) const {
  return static_cast<std::size_t>(hidden * input_dim + h);
}
std::size_t MlpParams::w2(int o, int h) const {
  return static_cast<std::size_t>(hidden * input_dim + hidden + o * hidden + h);
}
std::size_t MlpParams::b2(int o) const {
  return static_cast<std::size_t>(hidden * input_dim + hidden +
                                  outputs * hidden + o);
}

MlpParams MlpParams::random_init(int input_dim, int hidden, int outputs,
                                 std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1 || outputs < 1)
    throw std::invalid_argument("mlp: bad layer sizes");
  MlpParams p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.outputs = outputs;
  p.values.assign(p.count(), 0.0);
  Rng rng(seed);
  const double a1 = std::sqrt(6.0 / (input_dim + hidden));
  const double a2 = std::sqrt(6.0 / (hidden + outputs));
  for (int h = 0; h < hidden; ++h)
    for (int d = 0; d < input_dim; ++d)
      p.values[p.w1(h, d)] = rng.uniform(-a1, a1);
  for (int o = 0; o < outputs; ++o)
    for (int h = 0; h < hidden; ++h)
      p.values[p.w2(o, h)] = rng.uniform(-a2, a2);
  return p;
}

void mlp_forward(const MlpParams& p, const std::vector<double>& x,
                 std::vector<double>& raw_out) {
  Forward f;
  forward_pass(p, x, f);
  raw_out = f.raw;
}

Interval mlp_interval_output(const MlpParams& p,
                             const std::vector<double>& x) {
  if (p.outputs != 2)
    throw std::invalid_argument("mlp: interval head needs 2 outputs");
  Forward f;
  forward_pass(p, x, f);
  const double lower = f.raw[0];
  return {lower, lower + softplus(f.raw[1])};
}

LossGrad soft_loss(const MlpParams& params, const ReplicatedDataset& batch,
                   double lambda, double c0) {
  if (params.outputs != 2)
    throw std::invalid_argument("soft_loss: interval head needs 2 outputs");
  if (batch.size() == 0)
    throw std::invalid_argument("soft_loss: empty batch");
  if (!(c0 > 0.0)) throw std::invalid_argument("soft_loss: c0 must be > 0");
  if (lambda < 0.0)
    throw std::invalid_argument("soft_loss: lambda must be >= 0");

  LossGrad out;
  out.grad.assign(params.count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Forward f;
  std::vector<double> dout(2, 0.0);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_pass(params, batch.points[i], f);
    const double a = f.raw[0];
    const double b = f.raw[1];
    const double sb = sigmoid(b);
    const double width = softplus(b);
    const double lower = a;
    const double upper = a + width;

    const double inv_r = 1.0 / static_cast<double>(batch.replications[i].size());
    double penalty = 0.0;
    double dpen_dU = 0.0;
    double dpen_dL = 0.0;
    for (double y : batch.replications[i]) {
      const double su = sigmoid(c0 * (upper - y));
      const double sv = sigmoid(c0 * (y - lower));
      penalty += 1.0 - su * sv;
      dpen_dU -= c0 * su * (1.0 - su) * sv;
      dpen_dL += c0 * su * sv * (1.0 - sv);
    }
    penalty *= inv_r;
    dpen_dU *= inv_r;
    dpen_dL *= inv_r;

    out.value += inv_n * (width + lambda * penalty);
    // L = a, U = a + softplus(b): dU/da = dL/da = 1, dU/db = sigmoid(b).
    dout[0] = inv_n * lambda * (dpen_dL + dpen_dU);
    dout[1] = inv_n * (sb + lambda * dpen_dU * sb);
    backward_pass(params, batch.points[i], f, dout, out.grad);
  }
  return out;
}

LossGrad mse_loss(const MlpParams& params,
                  const std::vector<std::vector<double>>& xs,
                  const std::vector<double>& ys) {
  if (params.outputs != 1)
    throw std::invalid_argument("mse_loss: regression head needs 1 output");
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("mse_loss: bad data");

  LossGrad out;
  out.grad.assign(params.count(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(xs.size());
  Forward f;
  std::vector<double> dout(1, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    forward_pass(params, xs[i], f);
    const double err = f.raw[0] - ys[i];
    out.value += inv_n * err * err;
    dout[0] = inv_n * 2.0 * err;
    backward_pass(params, xs[i], f, dout, out.grad);
  }
  return out;
}

std::vector<double> AffineScaler::apply(const std::vector<double>& v) const {
  std::vector<double> z(v.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    z[k] = (v[k] - mean[k]) / scale[k];
  return z;
}

MlpIntervalModel::MlpIntervalModel(MlpParams params, AffineScaler x_scaler,
                                   double y_mean, double y_scale,
                                   double lambda)
    : params_(std::move(params)),
      x_scaler_(std::move(x_scaler)),
      y_mean_(y_mean),
      y_scale_(y_scale),
      lambda_(lambda) {}

Interval MlpIntervalModel::eval(const std::vector<double>& x) const {
  const Interval z = mlp_interval_output(params_, x_scaler_.apply(x));
  // y_scale_ > 0 keeps the ordering after the inverse map.
  return {y_mean_ + y_scale_ * z.lower, y_mean_ + y_scale_ * z.upper};
}

std::string MlpIntervalModel::label() const {
  return "NN(lambda=" + std::to_string(lambda_) + ")";
}

std::string MlpIntervalModel::to_json() const {
  nlohmann::json j;
  j["method"] = "nn-interval";
  j["lambda"] = lambda_;
  j["input_dim"] = params_.input_dim;
  j["hidden"] = params_.hidden;
  j["outputs"] = params_.outputs;
  j["values"] = params_.values;
  j["x_mean"] = x_scaler_.mean;
  j["x_scale"] = x_scaler_.scale;
  j["y_mean"] = y_mean_;
  j["y_scale"] = y_scale_;
  return j.dump(2);
}

MlpIntervalModel MlpIntervalModel::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MlpParams p;
  p.input_dim = j.at("input_dim").get<int>();
  p.hidden = j.at("hidden").get<int>();
  p.outputs = j.at("outputs").get<int>();
  p.values = j.at("values").get<std::vector<double>>();
  if (p.values.size() != p.count())
    throw std::invalid_argument("nn checkpoint: value count mismatch");
  AffineScaler s;
  s.mean = j.at("x_mean").get<std::vector<double>>();
  s.scale = j.at("x_scale").get<std::vector<double>>();
  return MlpIntervalModel(std::move(p), std::move(s),
                          j.at("y_mean").get<double>(),
                          j.at("y_scale").get<double>(),
                          j.at("lambda").get<double>());
}

std::shared_ptr<MlpIntervalModel> train_pi_network(
    const ReplicatedDataset& train, const TrainConfig& cfg,
    std::vector<double>* loss_history) {
  train.validate();
  if (train.size() == 0)
    throw std::invalid_argument("train_pi_network: empty training data");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("train_pi_network: batch size must be >= 1");

  const AffineScaler xs = fit_x_scaler(train.points);
  const FlatData flat = flatten(train);
  double y_mean = 0.0, y_scale = 1.0;
  fit_y_scaler(flat.ys, y_mean, y_scale);

  ReplicatedDataset std_data;
  std_data.points.reserve(train.size());
  std_data.replications.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    std_data.points.push_back(xs.apply(train.points[i]));
    std::vector<double> r;
    r.reserve(train.replications[i].size());
    for (double y : train.replications[i])
      r.push_back((y - y_mean) / y_scale);
    std_data.replications.push_back(std::move(r));
  }

  MlpParams params = MlpParams::random_init(
      static_cast<int>(train.dim()), cfg.hidden, 2, derive_seed(cfg.seed, 11));
  // Start with bounds wrapping the standardized responses. Growing an
  // interval outward cannot reach points that sit beyond the steep
  // sigmoid's gradient band; shrinking from full coverage can always stop.
  params.values[params.b2(0)] = -2.5;
  params.values[params.b2(1)] = 5.0;  // softplus(5) ~ 5, so U starts ~ +2.5
  Adam adam(params.count(), cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 12));

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto n_batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    for (std::size_t pos = 0; pos < order.size(); pos += n_batch) {
      ReplicatedDataset batch;
      const std::size_t stop = std::min(order.size(), pos + n_batch);
      for (std::size_t k = pos; k < stop; ++k) {
        batch.points.push_back(std_data.points[order[k]]);
        batch.replications.push_back(std_data.replications[order[k]]);
      }
      const LossGrad lg = soft_loss(params, batch, cfg.lambda, cfg.c0);
      if (!std::isfinite(lg.value))
        throw std::runtime_error("training diverged (lambda=" +
                                 std::to_string(cfg.lambda) + ")");
      adam.update(params.values, lg.grad);
    }
    if (loss_history) {
      loss_history->push_back(
          soft_loss(params, std_data, cfg.lambda, cfg.c0).value);
    }
  }
  const double final_loss = soft_loss(params, std_data, cfg.lambda, cfg.c0).value;
  if (!std::isfinite(final_loss))
    throw std::runtime_error("training diverged (lambda=" +
                             std::to_string(cfg.lambda) + ")");

  return std::make_shared<MlpIntervalModel>(std::move(params), xs, y_mean,
                                            y_scale, cfg.lambda);
}

CandidateSet train_candidates(const ReplicatedDataset& train,
                              const std::vector<double>& lambda_grid,
                              const TrainConfig& cfg) {
  if (lambda_grid.empty())
    throw std::invalid_argument("train_candidates: empty lambda grid");
  const std::set<double> unique(lambda_grid.begin(), lambda_grid.end());
  if (unique.size() != lambda_grid.size())
    throw std::invalid_argument("train_candidates: duplicate lambda values");

  std::vector<std::future<std::shared_ptr<MlpIntervalModel>>> futures;
  futures.reserve(lambda_grid.size());
  for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
    TrainConfig entry = cfg;
    entry.lambda = lambda_grid[k];
    entry.seed = derive_seed(cfg.seed, k);
    futures.push_back(std::async(std::launch::async, [entry, &train] {
      return train_pi_network(train, entry);
    }));
  }

  CandidateSet set;
  for (std::size_t k = 0; k < futures.size(); ++k) {
    try {
      set.add(futures[k].get());
    } catch (const std::exception& e) {
      throw std::runtime_error("candidate " + std::to_string(k) +
                               " (lambda=" + std::to_string(lambda_grid[k]) +
                               ") failed: " + e.what());
    }
  }
  return set;
}

std::vector<double> log_spaced_grid(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("grid: count must be >= 1");
  if (!(lo > 0.0) || !(hi >= lo))
    throw std::invalid_argument("grid: need 0 < lo <= hi");
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  if (count == 1) {
    grid.push_back(lo);
    return grid;
  }
  const double llo = std::log(lo);
  const double lhi = std::log(hi);
  for (int k = 0; k < count; ++k) {
    grid.push_back(std::exp(llo + (lhi - llo) * k / (count - 1)));
  }
  return grid;
}

MlpRegressor::MlpRegressor(MlpParams params, AffineScaler x_scaler,
                           double y_mean, double y_scale)
    : params_(std::move(params)),
      x_scaler_(std::move(x_scaler)),
      y_mean_(y_mean),
      y_scale_(y_scale) {}

double MlpRegressor::predict(const std::vector<double>& x) const {
  std::vector<double> raw;
  mlp_forward(params_, x_scaler_.apply(x), raw);
  return y_mean_ + y_scale_ * raw[0];
}

MlpRegressor fit_regression_mlp(const std::vector<std::vector<double>>& xs,
                                const std::vector<double>& ys,
                                const TrainConfig& cfg,
                                std::vector<double>* loss_history) {
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("fit_regression_mlp: bad data");

  const AffineScaler scaler = fit_x_scaler(xs);
  double y_mean = 0.0, y_scale = 1.0;
  fit_y_scaler(ys, y_mean, y_scale);

  std::vector<std::vector<double>> zs(xs.size());
  std::vector<double> ws(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    zs[i] = scaler.apply(xs[i]);
    ws[i] = (ys[i] - y_mean) / y_scale;
  }

  MlpParams params = MlpParams::random_init(static_cast<int>(xs.front().size()),
                                            cfg.hidden, 1,
                                            derive_seed(cfg.seed, 21));
  Adam adam(params.count(), cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 22));
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto n_batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    for (std::size_t pos = 0; pos < order.size(); pos += n_batch) {
      const std::size_t stop = std::min(order.size(), pos + n_batch);
      std::vector<std::vector<double>> bx;
      std::vector<double> by;
      for (std::size_t k = pos; k < stop; ++k) {
        bx.push_back(zs[order[k]]);
        by.push_back(ws[order[k]]);
      }
      const LossGrad lg = mse_loss(params, bx, by);
      if (!std::isfinite(lg.value))
        throw std::runtime_error("regression training diverged");
      adam.update(params.values, lg.grad);
    }
    if (loss_history)
      loss_history->push_back(mse_loss(params, zs, ws).value);
  }
  return MlpRegressor(std::move(params), scaler, y_mean, y_scale);
}

BaseRegressor mlp_base_regressor(const TrainConfig& cfg) {
  return [cfg](const ReplicatedDataset& fit_data, std::uint64_t seed) {
    const FlatData flat = flatten(fit_data);
    TrainConfig used = cfg;
    used.seed = seed;
    auto model =
        std::make_shared<MlpRegressor>(fit_regression_mlp(flat.xs, flat.ys, used));
    return PointPredictor(
        [model](const std::vector<double>& x) { return model->predict(x); });
  };
}

}  // namespace pimeta
