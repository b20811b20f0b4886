#include "mbscore/nonlinear_score.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mbs {

PathTrack compute_path_track(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                             const MatrixXd& increments) {
  PathTrack out;
  const GridCoefficients coeffs(spec, grid);
  out.states.resize(spec.dim(), static_cast<Eigen::Index>(grid.size()));
  out.diverged = !euler_path(spec, coeffs, grid, x0, increments, out.states);
  if (out.diverged) return out;
  out.track = propagate_first_variation(spec, grid, &out.states);
  if (!spec.linear()) propagate_second_variation(spec, grid, out.states, out.track);
  out.gamma = malliavin_matrix(out.track, spec, grid).gamma.back();
  return out;
}

namespace {

MatrixXd gamma_inverse(const MatrixXd& gamma) { return regularized_inverse<double>(gamma, 0.0); }

VectorXd ito_sum(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                 const MatrixXd& increments) {
  VectorXd s = VectorXd::Zero(spec.dim());
  for (std::size_t k = 0; k < grid.n_steps; ++k)
    s += path.track.Yinv[k] * spec.diffusion(grid.node(k)) * increments.col(static_cast<Eigen::Index>(k));
  return s;
}

struct Derivatives {
  std::vector<MatrixXd> dY;      // D_t^l Y_T = A_t^l
  std::vector<MatrixXd> dgamma;  // D_t^l gamma_T
};

Derivatives malliavin_derivatives(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                                  std::size_t k) {
  const std::size_t n = grid.n_steps;
  if (k >= n) throw std::out_of_range("dgamma_malliavin: t_index must be < n_steps");
  if (path.diverged) throw std::invalid_argument("dgamma_malliavin: path diverged");
  const Eigen::Index m = spec.dim();
  const Eigen::Index d = spec.noise_dim();
  const double dt = grid.dt();
  Derivatives out;
  out.dY.assign(static_cast<std::size_t>(d), MatrixXd::Zero(m, m));
  out.dgamma.assign(static_cast<std::size_t>(d), MatrixXd::Zero(m, m));
  if (path.track.Z.empty()) return out;  // linear drift: A = B = 0

  // The increment on [t_k, t_{k+1}) first moves X_{k+1}: the perturbation
  // direction is Y_{k+1}^{-1} sigma(t_k) and the split point is node k + 1.
  const auto& tr = path.track;
  const MatrixXd& yT = tr.Y[n];
  const std::size_t k1 = k + 1;
  const MatrixXd vt = tr.Yinv[k1] * spec.diffusion(grid.node(k));
  for (Eigen::Index l = 0; l < d; ++l) {
    const VectorXd w = vt.col(l);
    const MatrixXd zt_w = tr.Z[k1].contract(w);
    const MatrixXd a = tr.Z[n].contract(w) - yT * tr.Yinv[k1] * zt_w;
    MatrixXd acc = MatrixXd::Zero(m, m);
    for (std::size_t s = 0; s < n; ++s) {
      const MatrixXd vs = tr.Yinv[s] * spec.diffusion(grid.node(s));
      const MatrixXd ws = yT * vs;
      if (s < k1) {
        acc += a * vs * ws.transpose() * dt;
      } else {
        const MatrixXd inner = tr.Z[s].contract(w) - tr.Y[s] * tr.Yinv[k1] * zt_w;
        const MatrixXd b = a * vs - yT * tr.Yinv[s] * inner * vs;
        acc += b * ws.transpose() * dt;
      }
    }
    out.dY[static_cast<std::size_t>(l)] = a;
    out.dgamma[static_cast<std::size_t>(l)] = acc + acc.transpose();
  }
  return out;
}

// Fixed-size engine. Forward sweep stores Y^{-1}, v = Y^{-1} sigma and Z per
// node; backward sweep accumulates the suffix sums Q = sum_{s>k} v_s W_s^T ds
// and R_a = sum_{s>k} Y_T Y_s^{-1} Z_s[a] v_s W_s^T ds, so that with
// w = Y_{k+1}^{-1} sigma(t_k) e_l
//   D_k^l gamma = M + M^T,
//   M = A Gamma - sum_a w_a R_a + Y_T Y_{k+1}^{-1} Z_{k+1}(w) Q,
// where Gamma = sum_s v_s W_s^T ds.
template <int M, int D>
SkorokhodSample engine(const SdeSpec<double>& spec, const GridCoefficients& c, const TimeGrid<double>& grid,
                       const VectorXd& x0, const double* dw, std::size_t path_id) {
  using Vec = Eigen::Matrix<double, M, 1>;
  using Mat = Eigen::Matrix<double, M, M>;
  using MatMD = Eigen::Matrix<double, M, D>;
  using VecD = Eigen::Matrix<double, D, 1>;

  const Eigen::Index m = spec.dim();
  const Eigen::Index d = spec.noise_dim();
  const auto mu = static_cast<std::size_t>(m);
  const std::size_t n = grid.n_steps;
  const double dt = grid.dt();
  const double cubic = spec.cubic();
  const bool nonlinear = cubic != 0.0;

  thread_local std::vector<Mat> yinv;
  thread_local std::vector<MatMD> v;
  thread_local std::vector<MatMD> vnext;  // Y_{k+1}^{-1} sigma(t_k)
  thread_local std::vector<Mat> z;
  yinv.resize(n + 1);
  v.resize(n + 1);
  vnext.resize(n);
  if (nonlinear) z.assign((n + 1) * mu, Mat::Zero(m, m));

  SkorokhodSample out;
  out.path = path_id;

  const Mat id = Mat::Identity(m, m);
  Vec x = x0;
  Mat y = id;
  Mat yi = id;
  Mat iacc = Mat::Zero(m, m);
  Vec s = Vec::Zero(m);
  for (std::size_t k = 0; k < n; ++k) {
    const Mat a = c.drift[k];
    const MatMD sig = c.diffusion[k];
    const Eigen::Map<const VecD> db(dw + k * static_cast<std::size_t>(d), d);
    Mat j = a;
    if (nonlinear) j.diagonal().array() -= 3.0 * cubic * x.array().square();
    yinv[k] = yi;
    v[k] = yi * sig;
    s += v[k] * db;
    iacc += v[k] * v[k].transpose() * dt;
    if (nonlinear) {
      const Vec h = -6.0 * cubic * x;
      for (std::size_t q = 0; q < mu; ++q) {
        const Mat hyy = (h.cwiseProduct(y.col(static_cast<Eigen::Index>(q)))).asDiagonal() * y;
        z[(k + 1) * mu + q] = z[k * mu + q] + (hyy + j * z[k * mu + q]) * dt;
      }
    }
    const Mat step = id + j * dt;
    y = step * y;
    yi = yi * step.inverse();
    vnext[k] = yi * sig;
    Vec b = a * x;
    if (nonlinear) b.array() -= cubic * x.array().cube();
    x += b * dt + sig * db;
    if (!(x.cwiseAbs().maxCoeff() <= kDivergenceGuard)) {
      out.diverged = true;
      out.x_terminal = VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
      return out;
    }
  }
  yinv[n] = yi;
  out.x_terminal = x;

  Mat gamma = y * iacc * y.transpose();
  gamma = 0.5 * (gamma + gamma.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(gamma);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  out.condition = lmin > 0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(lmin > 0) || out.condition > kMaxConditionNumber) {
    out.flagged = true;
    return out;
  }
  const Mat gi = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();

  const Vec ito = gi * y * s;
  Vec corr = Vec::Zero(m);
  if (nonlinear) {
    const Mat big_gamma = iacc * y.transpose();
    Mat q = Mat::Zero(m, m);
    thread_local std::vector<Mat> r;
    r.assign(mu, Mat::Zero(m, m));
    for (std::size_t kk = n; kk-- > 0;) {
      // q and r hold the suffix sums over s >= kk + 1 here
      const MatMD& vk = v[kk];
      const MatMD wk = y * vk;
      const Mat g = y * yinv[kk + 1];
      const std::size_t z1 = (kk + 1) * mu;
      Vec ck = Vec::Zero(m);
      for (Eigen::Index l = 0; l < d; ++l) {
        const Vec w = vnext[kk].col(l);
        Mat zT_w = Mat::Zero(m, m);
        Mat zt_w = Mat::Zero(m, m);
        for (std::size_t a = 0; a < mu; ++a) {
          zT_w += w(static_cast<Eigen::Index>(a)) * z[n * mu + a];
          zt_w += w(static_cast<Eigen::Index>(a)) * z[z1 + a];
        }
        const Mat al = zT_w - g * zt_w;
        Mat mm = al * big_gamma + g * zt_w * q;
        for (std::size_t a = 0; a < mu; ++a) mm -= w(static_cast<Eigen::Index>(a)) * r[a];
        const Mat dg = mm + mm.transpose();
        const Vec gw = gi * wk.col(l);
        ck += gi * (al * vk.col(l)) - gi * (dg * gw);
      }
      const Mat p = vk * wk.transpose() * dt;
      q += p;
      const Mat gk = y * yinv[kk];
      for (std::size_t a = 0; a < mu; ++a) r[a] += gk * z[kk * mu + a] * p;
      corr += ck * dt;
    }
  }
  out.ito = ito;
  out.correction = corr;
  out.delta = ito - corr;
  return out;
}

SkorokhodSample engine_dispatch(const SdeSpec<double>& spec, const GridCoefficients& c, const TimeGrid<double>& grid,
                                const VectorXd& x0, const double* dw, std::size_t path_id) {
  const auto m = spec.dim();
  const auto d = spec.noise_dim();
  if (m > 4 || d > 4) throw std::invalid_argument("skorokhod_nonlinear: dimension budget is m, d <= 4");
  if (m == 1 && d == 1) return engine<1, 1>(spec, c, grid, x0, dw, path_id);
  if (m == 2 && d == 2) return engine<2, 2>(spec, c, grid, x0, dw, path_id);
  if (m == 3 && d == 3) return engine<3, 3>(spec, c, grid, x0, dw, path_id);
  return engine<Eigen::Dynamic, Eigen::Dynamic>(spec, c, grid, x0, dw, path_id);
}

}  // namespace

VectorXd substituted_ito_term(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                              const MatrixXd& increments) {
  if (path.diverged) throw std::invalid_argument("substituted_ito_term: path diverged");
  return gamma_inverse(path.gamma) * path.track.Y.back() * ito_sum(spec, grid, path, increments);
}

double substituted_ito_term(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                            const MatrixXd& increments, Eigen::Index k) {
  return substituted_ito_term(spec, grid, path, increments)(k);
}

std::vector<MatrixXd> dgamma_malliavin(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                       const PathTrack& path, std::size_t t_index) {
  return malliavin_derivatives(spec, grid, path, t_index).dgamma;
}

SkorokhodSample skorokhod_nonlinear(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                                    const MatrixXd& increments, std::size_t path_id) {
  if (increments.rows() != spec.noise_dim() || increments.cols() != static_cast<Eigen::Index>(grid.n_steps))
    throw std::invalid_argument("skorokhod_nonlinear: increments have wrong shape");
  const GridCoefficients coeffs(spec, grid);
  const MatrixXd dw = increments;
  return engine_dispatch(spec, coeffs, grid, x0, dw.data(), path_id);
}

SkorokhodSample skorokhod_reference(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                    const PathTrack& path, const MatrixXd& increments) {
  SkorokhodSample out;
  if (path.diverged) {
    out.diverged = true;
    return out;
  }
  const std::size_t n = grid.n_steps;
  const Eigen::Index m = spec.dim();
  const double dt = grid.dt();
  out.x_terminal = path.states.col(static_cast<Eigen::Index>(n));
  const MatrixXd gi = gamma_inverse(path.gamma);
  const MatrixXd& yT = path.track.Y[n];
  out.ito = gi * yT * ito_sum(spec, grid, path, increments);
  out.correction = VectorXd::Zero(m);
  for (std::size_t k = 0; k < n; ++k) {
    const Derivatives der = malliavin_derivatives(spec, grid, path, k);
    const MatrixXd vt = path.track.Yinv[k] * spec.diffusion(grid.node(k));
    for (std::size_t l = 0; l < der.dY.size(); ++l) {
      // column k of dF is D_t^l F_k = (D_t^l Y_T)^T gamma^{-1} e_k - Y_T^T gamma^{-1} D_t^l gamma gamma^{-1} e_k
      const MatrixXd dF = der.dY[l].transpose() * gi - yT.transpose() * gi * der.dgamma[l] * gi;
      out.correction += dF.transpose() * vt.col(static_cast<Eigen::Index>(l)) * dt;
    }
  }
  out.delta = out.ito - out.correction;
  return out;
}

SkorokhodEnsemble simulate_skorokhod(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                     const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed) {
  if (n_paths == 0) throw std::invalid_argument("simulate_skorokhod: n_paths must be >= 1");
  const BrownianStore store(seed, spec.noise_dim(), grid);
  const GridCoefficients coeffs(spec, grid);
  std::vector<SkorokhodSample> all(n_paths);
  const std::size_t nd = static_cast<std::size_t>(spec.noise_dim()) * grid.n_steps;
  parallel_for(n_paths, [&](std::size_t i) {
    thread_local std::vector<double> dw;
    dw.resize(nd);
    store.fill(i, dw);
    all[i] = engine_dispatch(spec, coeffs, grid, x0_sampler(i), dw.data(), i);
  });
  SkorokhodEnsemble out;
  out.n_paths = n_paths;
  out.samples.reserve(n_paths);
  for (auto& s : all) {
    if (s.diverged)
      ++out.n_diverged;
    else if (s.flagged)
      ++out.n_flagged;
    else
      out.samples.push_back(std::move(s));
  }
  if (static_cast<double>(out.n_diverged) > kMaxDivergedFraction * static_cast<double>(n_paths))
    throw NumericError("simulate_skorokhod: more than 1% of paths diverged (" + std::to_string(out.n_diverged) +
                       " of " + std::to_string(n_paths) + ")");
  return out;
}

// ---------------------------------------------------------------------------

VectorXd silverman_bandwidth(const MatrixXd& points) {
  const auto n = static_cast<double>(points.cols());
  const auto d = static_cast<double>(points.rows());
  if (points.cols() < 2) throw std::invalid_argument("silverman_bandwidth: need >= 2 points");
  const VectorXd mean = points.rowwise().mean();
  const VectorXd sd = ((points.colwise() - mean).array().square().rowwise().sum() / (n - 1)).sqrt();
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
  return (factor * sd).cwiseMax(1e-12);
}

namespace {

int poisson1(RngStream& rng) {
  // inversion for Poisson(1)
  const double u = rng.uniform();
  double p = std::exp(-1.0);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 20) {
    ++k;
    p /= k;
    cdf += p;
  }
  return k;
}

}  // namespace

ConditionalScore conditional_score(const std::vector<SkorokhodSample>& samples, const VectorXd& y,
                                   const ConditionalEstimator& est) {
  if (samples.size() < 1000) throw std::invalid_argument("conditional_score: need at least 1000 valid samples");
  const Eigen::Index m = y.size();
  const std::size_t n = samples.size();
  ConditionalScore out;
  if (est.bandwidth.size() == 0) {
    MatrixXd pts(m, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) pts.col(static_cast<Eigen::Index>(i)) = samples[i].x_terminal;
    out.bandwidth = silverman_bandwidth(pts);
  } else {
    if (est.bandwidth.size() != m || !(est.bandwidth.array() > 0).all())
      throw std::invalid_argument("conditional_score: bandwidth must be positive per coordinate");
    out.bandwidth = est.bandwidth;
  }
  const VectorXd inv_h = out.bandwidth.cwiseInverse();

  std::vector<std::size_t> idx;
  std::vector<double> wts;
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd u = (samples[i].x_terminal - y).cwiseProduct(inv_h);
    double w = 0;
    if (est.kernel == KernelKind::Gaussian) {
      const double q = u.squaredNorm();
      if (q < 60.0) w = std::exp(-0.5 * q);
    } else {
      w = u.cwiseAbs().maxCoeff() <= 1.0 ? 1.0 : 0.0;
    }
    if (w > 0) {
      idx.push_back(i);
      wts.push_back(w);
    }
  }
  auto estimate = [&](const std::vector<int>* counts, double* ess) {
    VectorXd num = VectorXd::Zero(m);
    double den = 0, den2 = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const double w = wts[j] * (counts ? (*counts)[j] : 1);
      num += w * samples[idx[j]].delta;
      den += w;
      den2 += w * w;
    }
    if (ess) *ess = den2 > 0 ? den * den / den2 : 0.0;
    return den > 0 ? VectorXd(-num / den) : VectorXd::Constant(m, std::numeric_limits<double>::quiet_NaN());
  };
  out.score = estimate(nullptr, &out.ess);
  out.low_confidence = out.ess < est.min_ess || !out.score.allFinite();
  out.standard_error = VectorXd::Zero(m);
  if (est.bootstrap > 0 && !idx.empty()) {
    std::vector<int> counts(idx.size());
    VectorXd sum = VectorXd::Zero(m), sum2 = VectorXd::Zero(m);
    std::size_t used = 0;
    for (std::size_t b = 0; b < est.bootstrap; ++b) {
      RngStream rng(est.seed, rng_domain::kBootstrap + b);
      for (auto& c : counts) c = poisson1(rng);
      const VectorXd e = estimate(&counts, nullptr);
      if (!e.allFinite()) continue;
      sum += e;
      sum2 += e.cwiseProduct(e);
      ++used;
    }
    if (used > 1) {
      const VectorXd mean = sum / static_cast<double>(used);
      out.standard_error =
          ((sum2 / static_cast<double>(used) - mean.cwiseProduct(mean)) * (static_cast<double>(used) / (used - 1.0)))
              .cwiseMax(0.0)
              .cwiseSqrt();
    }
  }
  return out;
}

NonlinearMcField::NonlinearMcField(const SdeSpec<double>& spec, double dt, std::vector<double> horizons,
                                   const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed,
                                   ConditionalEstimator estimator)
    : horizons_(std::move(horizons)), estimator_(std::move(estimator)) {
  if (horizons_.empty()) throw std::invalid_argument("NonlinearMcField: need at least one horizon");
  std::sort(horizons_.begin(), horizons_.end());
  for (std::size_t i = 0; i < horizons_.size(); ++i) {
    const auto grid = TimeGrid<double>(0.0, horizons_[i], std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(horizons_[i] / dt))));
    ensembles_.push_back(simulate_skorokhod(spec, grid, x0_sampler, n_paths, seed + i));
  }
}

MatrixXd NonlinearMcField::score(double t, const MatrixXd& points) const {
  if (!(t > 0)) throw SingularTimeError("NonlinearMcField: t must be positive");
  const auto it = std::min_element(horizons_.begin(), horizons_.end(),
                                   [t](double a, double b) { return std::abs(a - t) < std::abs(b - t); });
  const auto& ens = ensembles_[static_cast<std::size_t>(it - horizons_.begin())];
  MatrixXd out(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const auto r = conditional_score(ens.samples, points.col(j), estimator_);
    out.col(j) = r.score.allFinite() ? r.score : VectorXd::Zero(points.rows());
  }
  return out;
}

}  // namespace mbs
