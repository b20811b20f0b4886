#pragma once

#include "mbscore/variation.hpp"

#include <memory>
#include <numbers>

namespace mbs {

// ---------------------------------------------------------------------------
// Gaussian-mixture initial law and its exact posterior

template <typename Scalar>
struct GaussianMixturePrior {
  std::vector<Scalar> weights;
  std::vector<Vector<Scalar>> means;
  std::vector<Matrix<Scalar>> covariances;

  GaussianMixturePrior() = default;
  GaussianMixturePrior(std::vector<Scalar> w, std::vector<Vector<Scalar>> mu, std::vector<Matrix<Scalar>> cov)
      : weights(std::move(w)), means(std::move(mu)), covariances(std::move(cov)) {
    if (weights.empty() || weights.size() != means.size() || weights.size() != covariances.size())
      throw std::invalid_argument("GaussianMixturePrior: component arrays must be non-empty and matched");
    Scalar total = 0;
    for (Scalar w : weights) {
      if (!(w > 0)) throw std::invalid_argument("GaussianMixturePrior: weights must be positive");
      total += w;
    }
    for (Scalar& w : weights) w /= total;
    const auto m = means.front().size();
    for (std::size_t i = 0; i < means.size(); ++i)
      if (means[i].size() != m || covariances[i].rows() != m || covariances[i].cols() != m)
        throw std::invalid_argument("GaussianMixturePrior: inconsistent dimensions");
  }

  std::size_t size() const { return weights.size(); }
  Eigen::Index dim() const { return means.front().size(); }

  static GaussianMixturePrior isotropic(std::vector<Vector<Scalar>> mu, Scalar std) {
    const auto m = mu.front().size();
    std::vector<Scalar> w(mu.size(), Scalar(1) / static_cast<Scalar>(mu.size()));
    std::vector<Matrix<Scalar>> cov(mu.size(), std * std * Matrix<Scalar>::Identity(m, m));
    return GaussianMixturePrior(std::move(w), std::move(mu), std::move(cov));
  }
};

/// Eight components on the unit circle at angles 2 pi i / 8.
inline GaussianMixturePrior<double> gmm8_prior(double std) {
  std::vector<VectorXd> mu;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 8.0;
    mu.push_back((VectorXd(2) << std::cos(a), std::sin(a)).finished());
  }
  return GaussianMixturePrior<double>::isotropic(std::move(mu), std);
}

template <typename Scalar>
struct PosteriorResult {
  Vector<Scalar> mean;
  Vector<Scalar> responsibilities;
  bool degenerate = false;
};

namespace detail {

/// Per-component marginal N(Y mu_i, Y Sigma_i Y^T + gamma) of X_t: log-weights
/// log w_i + log N(y; .), the innovation solves S_i^{-1}(y - Y mu_i), and the
/// responsibilities.
template <typename Scalar>
struct MixtureTerms {
  std::vector<Scalar> logw;
  std::vector<Vector<Scalar>> solved;
  Vector<Scalar> resp;
  bool degenerate = false;
};

template <typename Scalar>
MixtureTerms<Scalar> mixture_terms(const GaussianMixturePrior<Scalar>& prior, const Vector<Scalar>& y,
                                   const Matrix<Scalar>& Y, const Matrix<Scalar>& gamma) {
  const auto m = y.size();
  MixtureTerms<Scalar> out;
  out.logw.resize(prior.size());
  out.solved.resize(prior.size());
  for (std::size_t i = 0; i < prior.size(); ++i) {
    const Matrix<Scalar> s = Y * prior.covariances[i] * Y.transpose() + gamma;
    Eigen::LDLT<Matrix<Scalar>> ldlt(s);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all())
      throw NumericError("exact_gaussian_posterior: marginal covariance is not positive definite");
    const Vector<Scalar> r = y - Y * prior.means[i];
    out.solved[i] = ldlt.solve(r);
    const Scalar logdet = ldlt.vectorD().array().log().sum();
    out.logw[i] = std::log(prior.weights[i]) - Scalar(0.5) * r.dot(out.solved[i]) - Scalar(0.5) * logdet -
                  Scalar(0.5) * static_cast<Scalar>(m) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  }
  const Scalar mx = *std::max_element(out.logw.begin(), out.logw.end());
  out.resp.resize(static_cast<Eigen::Index>(prior.size()));
  Scalar total = 0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    out.resp(static_cast<Eigen::Index>(i)) = std::exp(out.logw[i] - mx);
    total += out.resp(static_cast<Eigen::Index>(i));
  }
  if (!std::isfinite(mx) || !(total > 0) || !std::isfinite(total)) {
    out.degenerate = true;
    out.resp.setZero();
    const auto best = std::max_element(out.logw.begin(), out.logw.end()) - out.logw.begin();
    out.resp(best) = 1;
  } else {
    out.resp /= total;
  }
  return out;
}

}  // namespace detail

/// E[X_0 | X_t = y] when X_0 follows a Gaussian mixture and X_t = Y_t X_0 + N(0, gamma_t).
template <typename Scalar>
PosteriorResult<Scalar> exact_gaussian_posterior(const GaussianMixturePrior<Scalar>& prior, const Vector<Scalar>& y,
                                                 const Matrix<Scalar>& Y, const Matrix<Scalar>& gamma) {
  const auto terms = detail::mixture_terms(prior, y, Y, gamma);
  PosteriorResult<Scalar> out;
  out.mean = Vector<Scalar>::Zero(y.size());
  out.responsibilities = terms.resp;
  out.degenerate = terms.degenerate;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    const Scalar r = terms.resp(static_cast<Eigen::Index>(i));
    if (r == 0) continue;
    out.mean += r * (prior.means[i] + prior.covariances[i] * Y.transpose() * terms.solved[i]);
  }
  return out;
}

/// grad log sum_i w_i N(y; Y mu_i, Y Sigma_i Y^T + gamma), evaluated directly.
template <typename Scalar>
Vector<Scalar> mixture_marginal_score(const GaussianMixturePrior<Scalar>& prior, const Vector<Scalar>& y,
                                      const Matrix<Scalar>& Y, const Matrix<Scalar>& gamma) {
  const auto terms = detail::mixture_terms(prior, y, Y, gamma);
  Vector<Scalar> s = Vector<Scalar>::Zero(y.size());
  for (std::size_t i = 0; i < prior.size(); ++i) s -= terms.resp(static_cast<Eigen::Index>(i)) * terms.solved[i];
  return s;
}

// ---------------------------------------------------------------------------
// Closed-form transition scores of the isotropic schedules

template <typename Scalar>
Vector<Scalar> fokker_planck_score_oracle(const Schedule<Scalar>& schedule, Scalar t, const Vector<Scalar>& y,
                                          const Vector<Scalar>& x) {
  if (!(t > 0)) throw SingularTimeError("fokker_planck_score_oracle: t must be positive");
  const auto& p = schedule.params();
  switch (schedule.kind()) {
    case ScheduleKind::VE: {
      const Scalar den = p.sigma_min * p.sigma_min * (std::pow(p.sigma_max / p.sigma_min, 2 * t / p.horizon) - 1);
      return -(y - x) / den;
    }
    case ScheduleKind::VP: {
      const Scalar b = schedule.integrated_beta(t);
      return -(y - std::exp(Scalar(-0.5) * b) * x) / (1 - std::exp(-b));
    }
    case ScheduleKind::SubVP: {
      const Scalar b = schedule.integrated_beta(t);
      const Scalar v = 1 - std::exp(-b);
      return -(y - std::exp(Scalar(-0.5) * b) * x) / (v * v);
    }
    default: throw std::invalid_argument("fokker_planck_score_oracle: VE, VP or SubVP required");
  }
}

// ---------------------------------------------------------------------------
// Discrete covering field and Skorokhod-to-Ito reduction

/// M_ik = sum_t <D_t X_T^i, u_k(t)> dt with D_t X_T = Y_T Y_t^{-1} sigma(t) and
/// u_k = sum_j gamma^{-1}(k, j) D_t X_T^j, where gamma uses the same discrete
/// inner product. Terminal node index `terminal`.
template <typename Scalar>
Matrix<Scalar> covering_identity_check(const VariationTrack<Scalar>& track, const SdeSpec<Scalar>& spec,
                                       const TimeGrid<Scalar>& grid, std::size_t terminal) {
  if (terminal == 0 || terminal >= track.size())
    throw std::invalid_argument("covering_identity_check: terminal index out of range");
  const Eigen::Index m = spec.dim();
  const Scalar dt = grid.dt();
  std::vector<Matrix<Scalar>> dx(terminal);
  Matrix<Scalar> gamma = Matrix<Scalar>::Zero(m, m);
  for (std::size_t k = 0; k < terminal; ++k) {
    dx[k] = track.Y[terminal] * track.Yinv[k] * spec.diffusion(grid.node(k));
    gamma += dx[k] * dx[k].transpose() * dt;
  }
  Eigen::LLT<Matrix<Scalar>> llt(gamma);
  if (llt.info() != Eigen::Success) throw NumericError("covering_identity_check: gamma is singular");
  const Matrix<Scalar> ginv = llt.solve(Matrix<Scalar>::Identity(m, m));
  Matrix<Scalar> out = Matrix<Scalar>::Zero(m, m);
  for (std::size_t k = 0; k < terminal; ++k) {
    const Matrix<Scalar> u = ginv * dx[k];  // row k is u_k(t)^T
    out += dx[k] * u.transpose() * dt;
  }
  return out;
}

template <typename Scalar>
struct SkorokhodLinear {
  Vector<Scalar> ito;        // gamma^{-1} Y_T sum Y_t^{-1} sigma dB
  Vector<Scalar> algebraic;  // gamma^{-1} (X_T - Y_T x0)
  Scalar gap() const { return (ito - algebraic).norm(); }
};

/// Y_T sum_k Yinv_k sigma(t_k) dW_k over the path's increments.
inline VectorXd linear_ito_term(const PathEnsemble& ens, std::size_t path, const VariationTrack<double>& track) {
  const auto n = ens.grid.n_steps;
  const VectorXd s = ito_integral(ens, path, [&](double t) {
    const std::size_t k = ens.grid.nearest(t);
    return MatrixXd(track.Yinv[k] * ens.spec.diffusion(t));
  });
  return track.Y[n] * s;
}

/// Pathwise residual Y_T int Y^{-1} sigma dB - (X_T - Y_T x0).
inline VectorXd ito_identity_residual(const PathEnsemble& ens, std::size_t path, const VariationTrack<double>& track) {
  const auto n = ens.grid.n_steps;
  return linear_ito_term(ens, path, track) - (ens.terminal(path) - track.Y[n] * ens.initial(path));
}

inline SkorokhodLinear<double> skorokhod_linear(const PathEnsemble& ens, std::size_t path,
                                                const VariationTrack<double>& track, const MatrixXd& gamma_inv) {
  const auto n = ens.grid.n_steps;
  SkorokhodLinear<double> out;
  out.ito = gamma_inv * linear_ito_term(ens, path, track);
  out.algebraic = gamma_inv * (ens.terminal(path) - track.Y[n] * ens.initial(path));
  return out;
}

// ---------------------------------------------------------------------------
// Score fields

/// Maps (t, y) to grad log p_t(y). Points are the columns of `points`.
class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual MatrixXd score(double t, const MatrixXd& points) const = 0;
  VectorXd score_at(double t, const VectorXd& y) const { return score(t, y).col(0); }
};

/// Y_t, gamma_t and a regularized gamma_t^{-1} for a linear SDE.
struct LinearMoments {
  MatrixXd Y;
  MatrixXd gamma;
  MatrixXd gamma_inv;
};

class MomentProvider {
 public:
  virtual ~MomentProvider() = default;
  virtual LinearMoments moments(double t) const = 0;
};

/// Closed forms of the VE, VP and SubVP schedules.
class ClosedFormMoments final : public MomentProvider {
 public:
  explicit ClosedFormMoments(Schedule<double> schedule, std::optional<double> eps = std::nullopt)
      : schedule_(std::move(schedule)), eps_(eps) {
    if (!schedule_.isotropic()) throw std::invalid_argument("ClosedFormMoments: VE, VP or SubVP required");
  }
  LinearMoments moments(double t) const override {
    if (!(t > 0)) throw SingularTimeError("score at t = 0 is singular");
    const auto m = schedule_.dim();
    LinearMoments r;
    r.Y = schedule_.mean_factor(t) * MatrixXd::Identity(m, m);
    r.gamma = closed_form_gamma(schedule_, t);
    r.gamma_inv = regularized_inverse<double>(r.gamma, eps_);
    return r;
  }

 private:
  Schedule<double> schedule_;
  std::optional<double> eps_;
};

/// Alg.-1 quadrature on a grid; queries use the nearest grid node.
class QuadratureMoments final : public MomentProvider {
 public:
  QuadratureMoments(const SdeSpec<double>& spec, TimeGrid<double> grid, std::optional<double> eps = std::nullopt)
      : grid_(grid) {
    if (!spec.linear()) throw std::invalid_argument("QuadratureMoments: linear SDE required");
    track_ = propagate_first_variation(spec, grid_);
    gamma_ = malliavin_matrix(track_, spec, grid_);
    inv_.resize(grid_.size());
    for (std::size_t k = 1; k < grid_.size(); ++k) inv_[k] = regularized_inverse<double>(gamma_.gamma[k], eps);
  }
  LinearMoments moments(double t) const override {
    const std::size_t k = grid_.nearest(t);
    if (k == 0) throw SingularTimeError("score at grid node 0 is singular");
    return {track_.Y[k], gamma_.gamma[k], inv_[k]};
  }
  const VariationTrack<double>& track() const { return track_; }
  const MalliavinMatrix<double>& malliavin() const { return gamma_; }
  const TimeGrid<double>& grid() const { return grid_; }

 private:
  TimeGrid<double> grid_;
  VariationTrack<double> track_;
  MalliavinMatrix<double> gamma_;
  std::vector<MatrixXd> inv_;
};

/// Source of E[X_0 | X_t = y].
class ConditionalMean {
 public:
  virtual ~ConditionalMean() = default;
  virtual MatrixXd mean(double t, const MatrixXd& points, const LinearMoments& mom) const = 0;
};

class PointMassMean final : public ConditionalMean {
 public:
  explicit PointMassMean(VectorXd x0) : x0_(std::move(x0)) {}
  MatrixXd mean(double, const MatrixXd& points, const LinearMoments&) const override {
    return x0_.replicate(1, points.cols());
  }

 private:
  VectorXd x0_;
};

class GaussianPosteriorMean final : public ConditionalMean {
 public:
  explicit GaussianPosteriorMean(GaussianMixturePrior<double> prior) : prior_(std::move(prior)) {}
  MatrixXd mean(double, const MatrixXd& points, const LinearMoments& mom) const override {
    MatrixXd out(points.rows(), points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j)
      out.col(j) = exact_gaussian_posterior<double>(prior_, points.col(j), mom.Y, mom.gamma).mean;
    return out;
  }
  const GaussianMixturePrior<double>& prior() const { return prior_; }

 private:
  GaussianMixturePrior<double> prior_;
};

/// -gamma_t^{-1} (y - Y_t E[X_0 | X_t = y]).
class LinearScoreField final : public ScoreField {
 public:
  LinearScoreField(std::shared_ptr<const MomentProvider> moments, std::shared_ptr<const ConditionalMean> mean,
                   double t_floor = 1e-3)
      : moments_(std::move(moments)), mean_(std::move(mean)), t_floor_(t_floor) {}

  MatrixXd score(double t, const MatrixXd& points) const override {
    if (!(t > 0)) throw SingularTimeError("score_linear: t = 0 is singular");
    if (t < t_floor_) throw SingularTimeError("score_linear: t below the configured floor");
    const LinearMoments mom = moments_->moments(t);
    return -mom.gamma_inv * (points - mom.Y * mean_->mean(t, points, mom));
  }
  double t_floor() const { return t_floor_; }

 private:
  std::shared_ptr<const MomentProvider> moments_;
  std::shared_ptr<const ConditionalMean> mean_;
  double t_floor_;
};

}  // namespace mbs
