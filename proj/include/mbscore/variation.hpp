#pragma once

#include "mbscore/simulate.hpp"

#include <optional>

namespace mbs {

/// First variation Y_t, its inverse, and (for nonlinear drift) the second
/// variation Z_t on every grid node.
template <typename Scalar>
struct VariationTrack {
  std::vector<Matrix<Scalar>> Y;
  std::vector<Matrix<Scalar>> Yinv;
  std::vector<Tensor3<Scalar>> Z;  // empty unless propagated
  bool deterministic = false;      // shared by all paths (linear drift)

  std::size_t size() const { return Y.size(); }

  /// max_k || Y_k Yinv_k - I ||_max
  Scalar inverse_drift() const {
    Scalar worst = 0;
    for (std::size_t k = 0; k < Y.size(); ++k) {
      const Matrix<Scalar> e = Y[k] * Yinv[k] - Matrix<Scalar>::Identity(Y[k].rows(), Y[k].cols());
      worst = std::max(worst, e.cwiseAbs().maxCoeff());
    }
    return worst;
  }
};

/// Euler propagation of dY = d_x b(t, X_t) Y dt with Y_0 = I.
///
/// Y^{-1} follows its own equation dY^{-1} = -Y^{-1} d_x b dt, stepped as
/// Yinv_{k+1} = Yinv_k (I + J_k dt)^{-1}, the exact inverse of the Y step, so
/// Y_k Yinv_k stays at I to round-off. `states` (m x (n_steps+1)) is required
/// for nonlinear drift and ignored otherwise.
template <typename Scalar>
VariationTrack<Scalar> propagate_first_variation(const SdeSpec<Scalar>& spec, const TimeGrid<Scalar>& grid,
                                                 const Matrix<Scalar>* states = nullptr) {
  const Eigen::Index m = spec.dim();
  if (!spec.linear()) {
    if (!states || states->rows() != m || states->cols() != static_cast<Eigen::Index>(grid.size()))
      throw std::invalid_argument("propagate_first_variation: nonlinear drift needs the path states");
  }
  const Scalar dt = grid.dt();
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(m, m);
  VariationTrack<Scalar> tr;
  tr.deterministic = spec.linear();
  tr.Y.reserve(grid.size());
  tr.Yinv.reserve(grid.size());
  tr.Y.push_back(id);
  tr.Yinv.push_back(id);
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const Scalar t = grid.node(k);
    const Matrix<Scalar> j = spec.linear() ? spec.drift_matrix(t)
                                           : spec.drift_jacobian(t, states->col(static_cast<Eigen::Index>(k)));
    const Matrix<Scalar> step = id + j * dt;
    tr.Y.push_back(step * tr.Y.back());
    tr.Yinv.push_back(step.transpose().partialPivLu().solve(tr.Yinv.back().transpose()).transpose());
  }
  return tr;
}

/// Euler propagation of dZ = [d_xx b (Y (x) Y) + d_x b Z] dt with Z_0 = 0.
template <typename Scalar>
void propagate_second_variation(const SdeSpec<Scalar>& spec, const TimeGrid<Scalar>& grid,
                                const Matrix<Scalar>& states, VariationTrack<Scalar>& track) {
  if (spec.linear())
    throw std::invalid_argument("propagate_second_variation: drift is linear, Z vanishes identically");
  if (track.size() != grid.size()) throw std::invalid_argument("propagate_second_variation: track/grid mismatch");
  const Eigen::Index m = spec.dim();
  const Scalar dt = grid.dt();
  track.Z.assign(1, Tensor3<Scalar>(m));
  track.Z.reserve(grid.size());
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const Scalar t = grid.node(k);
    const auto x = states.col(static_cast<Eigen::Index>(k));
    const Matrix<Scalar> j = spec.drift_jacobian(t, x);
    const Tensor3<Scalar> h = spec.drift_hessian(t, x);
    const Matrix<Scalar>& y = track.Y[k];
    const Tensor3<Scalar>& z = track.Z.back();
    Tensor3<Scalar> next(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      Matrix<Scalar> hyy = h.contract(y.col(a)) * y;
      next.slices[static_cast<std::size_t>(a)] =
          z.slices[static_cast<std::size_t>(a)] + (hyy + j * z.slices[static_cast<std::size_t>(a)]) * dt;
    }
    track.Z.push_back(std::move(next));
  }
}

/// Malliavin matrix trajectory gamma_k = Y_k I_k Y_k^T with I_k accumulated by
/// the left-rectangle rule.
template <typename Scalar>
struct MalliavinMatrix {
  std::vector<Matrix<Scalar>> gamma;
  std::vector<Matrix<Scalar>> integral;
  Scalar epsilon = 0;
};

template <typename Scalar>
MalliavinMatrix<Scalar> malliavin_matrix(const VariationTrack<Scalar>& track, const SdeSpec<Scalar>& spec,
                                         const TimeGrid<Scalar>& grid) {
  const Eigen::Index m = spec.dim();
  const Scalar dt = grid.dt();
  MalliavinMatrix<Scalar> out;
  out.gamma.reserve(grid.size());
  out.integral.reserve(grid.size());
  out.integral.push_back(Matrix<Scalar>::Zero(m, m));
  out.gamma.push_back(Matrix<Scalar>::Zero(m, m));
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const Matrix<Scalar> v = track.Yinv[k - 1] * spec.diffusion(grid.node(k - 1));
    out.integral.push_back(out.integral.back() + v * v.transpose() * dt);
    Matrix<Scalar> g = track.Y[k] * out.integral.back() * track.Y[k].transpose();
    out.gamma.push_back(Scalar(0.5) * (g + g.transpose()));
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> closed_form_gamma(const Schedule<Scalar>& schedule, Scalar t) {
  return schedule.closed_form_variance(t) * Matrix<Scalar>::Identity(schedule.dim(), schedule.dim());
}

/// VE: 1/(sigma(t)^2 - sigma_min^2); VP: 1/(1 - e^{-B(t)}); SubVP: 1/(1 - e^{-B(t)})^2, times I.
template <typename Scalar>
Matrix<Scalar> closed_form_gamma_inv(const Schedule<Scalar>& schedule, Scalar t) {
  if (!(t > 0)) throw SingularTimeError("closed_form_gamma_inv: gamma^{-1} is unbounded at t = 0");
  return closed_form_gamma(schedule, t).inverse();
}

/// (gamma + eps I)^{-1} by Cholesky. Without an explicit eps the default is
/// 1e-8 trace(gamma)/m, floored at 1e-12. On factorization failure eps grows
/// tenfold, at most three times.
template <typename Scalar>
Matrix<Scalar> regularized_inverse(const Matrix<Scalar>& gamma, std::optional<Scalar> eps = std::nullopt) {
  const Eigen::Index m = gamma.rows();
  if (m == 0 || gamma.cols() != m) throw std::invalid_argument("regularized_inverse: gamma must be square");
  constexpr Scalar kFloor = Scalar(1e-12);
  Scalar e = eps ? *eps : std::max(Scalar(1e-8) * gamma.trace() / static_cast<Scalar>(m), kFloor);
  const Matrix<Scalar> id = Matrix<Scalar>::Identity(m, m);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix<Scalar>> llt(gamma + e * id);
    if (llt.info() == Eigen::Success) {
      Matrix<Scalar> inv = llt.solve(id);
      if (inv.allFinite()) return Scalar(0.5) * (inv + inv.transpose());
    }
    e = std::max(e * Scalar(10), kFloor);
  }
  throw NumericError("regularized_inverse: factorization failed after jitter escalation");
}

template <typename Scalar>
struct SlopeFit {
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar r2 = 0;
};

/// Least-squares line through (log x, log y).
template <typename Scalar>
SlopeFit<Scalar> fit_loglog(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_loglog: need >= 2 matched points");
  const auto n = static_cast<Eigen::Index>(x.size());
  Vector<Scalar> lx(n), ly(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(x[static_cast<std::size_t>(i)] > 0) || !(y[static_cast<std::size_t>(i)] > 0) ||
        !std::isfinite(y[static_cast<std::size_t>(i)]))
      throw NumericError("fit_loglog: non-positive or non-finite value");
    lx(i) = std::log(x[static_cast<std::size_t>(i)]);
    ly(i) = std::log(y[static_cast<std::size_t>(i)]);
  }
  const Scalar mx = lx.mean(), my = ly.mean();
  const Vector<Scalar> dx = lx.array() - mx, dy = ly.array() - my;
  SlopeFit<Scalar> f;
  f.slope = dx.dot(dy) / dx.squaredNorm();
  f.intercept = my - f.slope * mx;
  const Scalar ss_res = (dy - f.slope * dx).squaredNorm();
  f.r2 = Scalar(1) - ss_res / dy.squaredNorm();
  return f;
}

template <typename Scalar>
std::vector<Scalar> logspace(Scalar lo, Scalar hi, std::size_t n) {
  std::vector<Scalar> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * static_cast<Scalar>(i) /
                                         static_cast<Scalar>(n > 1 ? n - 1 : 1));
  return out;
}

/// Slope of log ||gamma^{-1}(t)||_2 against log t over a log-spaced grid in [1e-4, 1e-2].
template <typename Scalar>
SlopeFit<Scalar> fit_singularity_slope(const Schedule<Scalar>& schedule, const std::vector<Scalar>& t_grid) {
  if (t_grid.size() < 8) throw std::invalid_argument("fit_singularity_slope: need at least 8 time points");
  for (Scalar t : t_grid)
    if (t < Scalar(1e-4) * Scalar(0.999999) || t > Scalar(1e-2) * Scalar(1.000001))
      throw std::invalid_argument("fit_singularity_slope: times must lie in [1e-4, 1e-2]");
  std::vector<Scalar> norms;
  norms.reserve(t_grid.size());
  for (Scalar t : t_grid) {
    const Matrix<Scalar> inv = closed_form_gamma_inv(schedule, t);
    if (!inv.allFinite()) throw NumericError("fit_singularity_slope: non-finite gamma^{-1}");
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(inv, Eigen::EigenvaluesOnly);
    norms.push_back(es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return fit_loglog(t_grid, norms);
}

// ---------------------------------------------------------------------------
// Ensemble-level helpers

/// One shared track when the drift is linear, otherwise one per path.
inline std::vector<VariationTrack<double>> propagate_first_variation(const PathEnsemble& ens) {
  if (ens.spec.linear()) return {propagate_first_variation(ens.spec, ens.grid)};
  std::vector<VariationTrack<double>> out(ens.n_paths());
  parallel_for(ens.n_paths(), [&](std::size_t i) {
    if (!ens.diverged[i]) out[i] = propagate_first_variation(ens.spec, ens.grid, &ens.states[i]);
  });
  return out;
}

}  // namespace mbs
