#include "pimeta/kriging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pimeta/rng.hpp"
#include "pimeta/stats.hpp"

namespace pimeta {

namespace {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

double se_kernel(double tau2, double theta, double dist2) {
  return tau2 * std::exp(-dist2 / (2.0 * theta * theta));
}

Eigen::MatrixXd basis_matrix(const std::vector<std::vector<double>>& design,
                             int degree) {
  const auto n = static_cast<Eigen::Index>(design.size());
  const Eigen::Index p = sk_basis(design.front(), degree).size();
  Eigen::MatrixXd f(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.row(i) = sk_basis(design[static_cast<std::size_t>(i)], degree).transpose();
  }
  return f;
}

// Joint covariance tau2*R + diag(c_i/r_i).
Eigen::MatrixXd joint_covariance(const std::vector<std::vector<double>>& design,
                                 double tau2, double theta,
                                 const Eigen::VectorXd& intrinsic,
                                 const std::vector<int>& reps) {
  const auto n = static_cast<Eigen::Index>(design.size());
  Eigen::MatrixXd sigma(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = se_kernel(
          tau2, theta,
          squared_distance(design[static_cast<std::size_t>(i)],
                           design[static_cast<std::size_t>(j)]));
      sigma(i, j) = v;
      sigma(j, i) = v;
    }
    sigma(i, i) += intrinsic(i) / static_cast<double>(reps[static_cast<std::size_t>(i)]);
  }
  return sigma;
}

// Factors sigma + nugget*I, escalating the nugget from 1e-10 to 1e-4 of the
// mean diagonal. Returns the nugget used, or nullopt if even the largest
// failed.
std::optional<double> factor_with_nugget(const Eigen::MatrixXd& sigma,
                                         Eigen::LLT<Eigen::MatrixXd>& llt) {
  const double scale = sigma.diagonal().mean();
  double nugget = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd s = sigma;
    if (nugget > 0.0)
      s += nugget * Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols());
    llt.compute(s);
    if (llt.info() == Eigen::Success) return nugget;
    nugget = (nugget == 0.0) ? 1e-10 * scale : nugget * 10.0;
    if (nugget > 1e-4 * scale * 1.0001) break;
  }
  return std::nullopt;
}

struct ProfileResult {
  double nll = std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
};

// Negative log-likelihood of ybar with beta profiled out by GLS.
ProfileResult profile_nll(const std::vector<std::vector<double>>& design,
                          const Eigen::MatrixXd& f, const Eigen::VectorXd& ybar,
                          const std::vector<int>& reps,
                          const Eigen::VectorXd& intrinsic, double tau2,
                          double theta) {
  ProfileResult out;
  const Eigen::MatrixXd sigma =
      joint_covariance(design, tau2, theta, intrinsic, reps);
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (!factor_with_nugget(sigma, llt)) return out;

  const Eigen::MatrixXd sinv_f = llt.solve(f);
  const Eigen::VectorXd sinv_y = llt.solve(ybar);
  Eigen::MatrixXd gram = f.transpose() * sinv_f;
  Eigen::LDLT<Eigen::MatrixXd> gram_ldlt(gram);
  if (gram_ldlt.info() != Eigen::Success) return out;
  out.beta = gram_ldlt.solve(f.transpose() * sinv_y);

  const Eigen::VectorXd resid = ybar - f * out.beta;
  const Eigen::VectorXd sinv_r = llt.solve(resid);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < sigma.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixL()(i, i));
  const double n = static_cast<double>(sigma.rows());
  out.nll = 0.5 * (resid.dot(sinv_r) + logdet + n * std::log(2.0 * M_PI));
  if (!std::isfinite(out.nll)) out.nll = std::numeric_limits<double>::infinity();
  return out;
}

// Nelder-Mead on a 2-vector with box projection; small and sufficient for
// the smooth 2-parameter profile likelihood.
Eigen::Vector2d nelder_mead_2d(
    const std::function<double(const Eigen::Vector2d&)>& f,
    Eigen::Vector2d start, const Eigen::Vector2d& lo,
    const Eigen::Vector2d& hi, int max_iter) {
  auto clamp = [&](Eigen::Vector2d v) {
    for (int k = 0; k < 2; ++k) v(k) = std::clamp(v(k), lo(k), hi(k));
    return v;
  };
  std::array<Eigen::Vector2d, 3> pts;
  std::array<double, 3> vals;
  pts[0] = clamp(start);
  pts[1] = clamp(start + Eigen::Vector2d(0.5, 0.0));
  pts[2] = clamp(start + Eigen::Vector2d(0.0, 0.5));
  for (int i = 0; i < 3; ++i) vals[i] = f(pts[i]);

  for (int iter = 0; iter < max_iter; ++iter) {
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return vals[a] < vals[b]; });
    const int best = order[0], mid = order[1], worst = order[2];
    if (std::abs(vals[worst] - vals[best]) <
        1e-10 * (1.0 + std::abs(vals[best])))
      break;

    const Eigen::Vector2d centroid = 0.5 * (pts[best] + pts[mid]);
    const Eigen::Vector2d refl = clamp(centroid + (centroid - pts[worst]));
    const double fr = f(refl);
    if (fr < vals[best]) {
      const Eigen::Vector2d exp_pt =
          clamp(centroid + 2.0 * (centroid - pts[worst]));
      const double fe = f(exp_pt);
      if (fe < fr) {
        pts[worst] = exp_pt;
        vals[worst] = fe;
      } else {
        pts[worst] = refl;
        vals[worst] = fr;
      }
    } else if (fr < vals[mid]) {
      pts[worst] = refl;
      vals[worst] = fr;
    } else {
      const Eigen::Vector2d contr =
          clamp(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(contr);
      if (fc < vals[worst]) {
        pts[worst] = contr;
        vals[worst] = fc;
      } else {
        pts[mid] = clamp(pts[best] + 0.5 * (pts[mid] - pts[best]));
        pts[worst] = clamp(pts[best] + 0.5 * (pts[worst] - pts[best]));
        vals[mid] = f(pts[mid]);
        vals[worst] = f(pts[worst]);
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return vals[a] < vals[b]; });
  return pts[order[0]];
}

}  // namespace

Eigen::VectorXd sk_basis(const std::vector<double>& x, int degree) {
  if (degree < 0) throw std::invalid_argument("sk: basis degree must be >= 0");
  const auto d = static_cast<Eigen::Index>(x.size());
  Eigen::VectorXd f(1 + d * degree);
  f(0) = 1.0;
  Eigen::Index pos = 1;
  for (Eigen::Index k = 0; k < d; ++k) {
    double pw = 1.0;
    for (int p = 1; p <= degree; ++p) {
      pw *= x[static_cast<std::size_t>(k)];
      f(pos++) = pw;
    }
  }
  return f;
}

SKModel::SKModel(SKHyperparams params, std::vector<std::vector<double>> design,
                 Eigen::VectorXd ybar, std::vector<int> reps)
    : params_(std::move(params)),
      design_(std::move(design)),
      ybar_(std::move(ybar)),
      reps_(std::move(reps)) {
  if (design_.empty()) throw std::invalid_argument("sk: empty design");
  if (!(params_.tau2 > 0.0) || !(params_.theta > 0.0))
    throw std::invalid_argument("sk: tau2 and theta must be > 0");
  if (static_cast<Eigen::Index>(design_.size()) != ybar_.size() ||
      design_.size() != reps_.size() ||
      params_.intrinsic_var.size() != ybar_.size())
    throw std::invalid_argument("sk: inconsistent model inputs");

  const Eigen::MatrixXd sigma = joint_covariance(
      design_, params_.tau2, params_.theta, params_.intrinsic_var, reps_);
  const auto nugget = factor_with_nugget(sigma, chol_);
  if (!nugget) throw std::runtime_error("covariance singular");
  info_.nugget = *nugget;

  const Eigen::MatrixXd f = basis_matrix(design_, params_.basis_degree);
  if (f.cols() != params_.beta.size())
    throw std::invalid_argument("sk: beta does not match the basis");
  trend_ = f * params_.beta;
  alpha_ = chol_.solve(ybar_ - trend_);

  const Eigen::VectorXd resid = ybar_ - trend_;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < sigma.rows(); ++i)
    logdet += 2.0 * std::log(chol_.matrixL()(i, i));
  info_.log_likelihood =
      -0.5 * (resid.dot(alpha_) + logdet +
              static_cast<double>(sigma.rows()) * std::log(2.0 * M_PI));
}

double SKModel::kernel(const std::vector<double>& a,
                       const std::vector<double>& b) const {
  return se_kernel(params_.tau2, params_.theta, squared_distance(a, b));
}

Eigen::VectorXd SKModel::cross_covariance(const std::vector<double>& x) const {
  Eigen::VectorXd k(static_cast<Eigen::Index>(design_.size()));
  for (Eigen::Index i = 0; i < k.size(); ++i)
    k(i) = kernel(x, design_[static_cast<std::size_t>(i)]);
  return k;
}

void SKModel::posterior(const std::vector<double>& x, double& mean,
                        double& var) const {
  if (x.size() != design_.front().size())
    throw std::invalid_argument("sk: prediction point dimension mismatch");
  const Eigen::VectorXd k = cross_covariance(x);
  const Eigen::VectorXd fx = sk_basis(x, params_.basis_degree);
  mean = fx.dot(params_.beta) + k.dot(alpha_);
  // Triangular solve v = L^-1 k gives the explained variance k' Sigma^-1 k.
  const Eigen::VectorXd v =
      chol_.matrixL().solve(k);
  var = std::max(0.0, params_.tau2 - v.squaredNorm());
}

Interval SKModel::interval(const std::vector<double>& x, double alpha) const {
  double mean = 0.0, var = 0.0;
  posterior(x, mean, var);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double h = z * std::sqrt(var);
  return {mean - h, mean + h};
}

double SKModel::intrinsic_at(const std::vector<double>& x) const {
  // 1-d designs interpolate linearly between the bracketing design points
  // (clamped at the ends). Kernel smoothing flattens steeply varying noise
  // profiles toward their average, which misshapes predictive widths; the
  // chord of a convex variance profile errs wide instead.
  if (x.size() == 1 && design_.size() >= 2) {
    const double t = x[0];
    Eigen::Index lo = -1, hi = -1;
    double lo_x = -std::numeric_limits<double>::infinity();
    double hi_x = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < design_.size(); ++i) {
      const double xi = design_[i][0];
      if (xi <= t && xi > lo_x) {
        lo_x = xi;
        lo = static_cast<Eigen::Index>(i);
      }
      if (xi >= t && xi < hi_x) {
        hi_x = xi;
        hi = static_cast<Eigen::Index>(i);
      }
    }
    if (lo < 0) return params_.intrinsic_var(hi);
    if (hi < 0) return params_.intrinsic_var(lo);
    if (hi_x == lo_x)
      return std::max(params_.intrinsic_var(lo), params_.intrinsic_var(hi));
    const double w = (t - lo_x) / (hi_x - lo_x);
    return (1.0 - w) * params_.intrinsic_var(lo) + w * params_.intrinsic_var(hi);
  }

  double wsum = 0.0, acc = 0.0;
  double best_d = std::numeric_limits<double>::infinity();
  double nearest = 0.0;
  for (std::size_t i = 0; i < design_.size(); ++i) {
    const double d2 = squared_distance(x, design_[i]);
    const double w = std::exp(-d2 / (2.0 * params_.theta * params_.theta));
    wsum += w;
    acc += w * params_.intrinsic_var(static_cast<Eigen::Index>(i));
    if (d2 < best_d) {
      best_d = d2;
      nearest = params_.intrinsic_var(static_cast<Eigen::Index>(i));
    }
  }
  if (wsum < 1e-300) return nearest;
  return acc / wsum;
}

Interval SKModel::predictive_interval(const std::vector<double>& x,
                                      double alpha) const {
  double mean = 0.0, var = 0.0;
  posterior(x, mean, var);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double h = z * std::sqrt(var + intrinsic_at(x));
  return {mean - h, mean + h};
}

double SKModel::log_likelihood() const { return info_.log_likelihood; }

std::string SKModel::to_json() const {
  nlohmann::json j;
  j["method"] = "sk";
  j["tau2"] = params_.tau2;
  j["theta"] = params_.theta;
  j["basis_degree"] = params_.basis_degree;
  j["beta"] = std::vector<double>(params_.beta.begin(), params_.beta.end());
  j["intrinsic_var"] = std::vector<double>(params_.intrinsic_var.begin(),
                                           params_.intrinsic_var.end());
  j["nugget"] = info_.nugget;
  j["log_likelihood"] = info_.log_likelihood;
  j["design"] = design_;
  j["ybar"] = std::vector<double>(ybar_.begin(), ybar_.end());
  j["reps"] = reps_;
  return j.dump(2);
}

SKModel fit_sk(const ReplicatedDataset& train, int basis_degree, int restarts,
               std::uint64_t seed) {
  train.validate();
  const std::size_t n = train.size();
  if (n == 0) throw std::invalid_argument("sk: empty training data");
  for (std::size_t i = 0; i < n; ++i) {
    if (train.replications[i].size() < 2)
      throw std::invalid_argument("intrinsic variance unidentifiable: point " +
                                  std::to_string(i) +
                                  " has a single replicate");
  }

  Eigen::VectorXd ybar(static_cast<Eigen::Index>(n));
  Eigen::VectorXd intrinsic(static_cast<Eigen::Index>(n));
  std::vector<int> reps(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ys = train.replications[i];
    const double m =
        std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double ss = 0.0;
    for (double y : ys) ss += (y - m) * (y - m);
    ybar(static_cast<Eigen::Index>(i)) = m;
    intrinsic(static_cast<Eigen::Index>(i)) =
        ss / static_cast<double>(ys.size() - 1);
    reps[i] = static_cast<int>(ys.size());
  }

  const Eigen::MatrixXd f = basis_matrix(train.points, basis_degree);
  if (static_cast<Eigen::Index>(n) < f.cols())
    throw std::invalid_argument("sk: fewer points than basis terms");

  // Bounds in log space, scaled to the data.
  double range2 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      range2 = std::max(range2, squared_distance(train.points[i], train.points[j]));
  const double range = std::sqrt(std::max(range2, 1e-12));
  const double yvar =
      std::max((ybar.array() - ybar.mean()).square().mean(), 1e-10);

  const Eigen::Vector2d lo(std::log(1e-8 * yvar), std::log(1e-3 * range));
  const Eigen::Vector2d hi(std::log(1e4 * yvar), std::log(1e1 * range));

  auto objective = [&](const Eigen::Vector2d& p) {
    return profile_nll(train.points, f, ybar, reps, intrinsic, std::exp(p(0)),
                       std::exp(p(1)))
        .nll;
  };

  SKFitInfo info;
  Eigen::Vector2d best_p;
  double best_nll = std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(seed, 0x5b1dULL));
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Eigen::Vector2d start;
    if (r == 0) {
      start = Eigen::Vector2d(std::log(yvar), std::log(0.25 * range));
    } else {
      start = Eigen::Vector2d(lo(0) + (hi(0) - lo(0)) * rng.uniform(),
                              lo(1) + (hi(1) - lo(1)) * rng.uniform());
    }
    info.restart_initial.push_back(-objective(start));
    const Eigen::Vector2d opt = nelder_mead_2d(objective, start, lo, hi, 200);
    const double nll = objective(opt);
    if (nll < best_nll) {
      best_nll = nll;
      best_p = opt;
    }
  }
  if (!std::isfinite(best_nll)) throw std::runtime_error("covariance singular");

  const double tau2 = std::exp(best_p(0));
  const double theta = std::exp(best_p(1));
  const ProfileResult prof =
      profile_nll(train.points, f, ybar, reps, intrinsic, tau2, theta);

  SKHyperparams params;
  params.tau2 = tau2;
  params.theta = theta;
  params.beta = prof.beta;
  params.intrinsic_var = intrinsic;
  params.basis_degree = basis_degree;

  SKModel model(std::move(params), train.points, std::move(ybar),
                std::move(reps));
  model.mutable_fit_info().restart_initial = std::move(info.restart_initial);
  return model;
}

Interval SKIntervalModel::eval(const std::vector<double>& x) const {
  return predictive_ ? model_->predictive_interval(x, alpha_)
                     : model_->interval(x, alpha_);
}

std::string SKIntervalModel::label() const {
  return "SK(alpha=" + std::to_string(alpha_) +
         (predictive_ ? ",predictive)" : ",surface)");
}

}  // namespace pimeta
