#pragma once

#include "mbscore/schedule.hpp"

namespace mbs {

/// dX = b(t, X) dt + sigma(t) dB with b(t, x) = A(t) x - c * x^3 (componentwise cube).
///
/// The diffusion never sees the state. The linear part A(t) and sigma(t) come
/// from the schedule; c is the cubic confinement coefficient.
template <typename Scalar>
class SdeSpec {
 public:
  SdeSpec() = default;
  explicit SdeSpec(Schedule<Scalar> schedule, Scalar cubic = 0) : schedule_(std::move(schedule)), cubic_(cubic) {}

  const Schedule<Scalar>& schedule() const { return schedule_; }
  Eigen::Index dim() const { return schedule_.dim(); }
  Eigen::Index noise_dim() const { return schedule_.noise_dim(); }
  Scalar cubic() const { return cubic_; }

  /// Drift affine in x and diffusion state-independent.
  bool linear() const { return cubic_ == Scalar(0); }

  Matrix<Scalar> drift_matrix(Scalar t) const { return schedule_.drift_matrix(t); }
  Matrix<Scalar> diffusion(Scalar t) const { return schedule_.diffusion(t); }

  template <typename Derived>
  Vector<Scalar> drift(Scalar t, const Eigen::MatrixBase<Derived>& x) const {
    Vector<Scalar> out = schedule_.drift_matrix(t) * x;
    if (cubic_ != Scalar(0)) out.array() -= cubic_ * x.array().cube();
    return out;
  }

  template <typename Derived>
  Matrix<Scalar> drift_jacobian(Scalar t, const Eigen::MatrixBase<Derived>& x) const {
    Matrix<Scalar> j = schedule_.drift_matrix(t);
    if (cubic_ != Scalar(0)) j.diagonal().array() -= Scalar(3) * cubic_ * x.array().square();
    return j;
  }

  /// Hessian slices: result(i, p, q) = d^2 b_i / dx_p dx_q.
  template <typename Derived>
  Tensor3<Scalar> drift_hessian(Scalar /*t*/, const Eigen::MatrixBase<Derived>& x) const {
    Tensor3<Scalar> h(dim());
    if (cubic_ != Scalar(0))
      for (Eigen::Index i = 0; i < dim(); ++i) h(i, i, i) = Scalar(-6) * cubic_ * x(i);
    return h;
  }

 private:
  Schedule<Scalar> schedule_{};
  Scalar cubic_ = 0;
};

template <typename Scalar = double>
SdeSpec<Scalar> linear_sde(Schedule<Scalar> schedule) {
  return SdeSpec<Scalar>(std::move(schedule));
}

/// dX = -X^3 dt + sigma dB in `dim` independent coordinates.
template <typename Scalar = double>
SdeSpec<Scalar> cubic_sde(Scalar sigma, Scalar horizon, Eigen::Index dim = 1) {
  return SdeSpec<Scalar>(const_linear_schedule<Scalar>(Matrix<Scalar>::Zero(dim, dim),
                                                       sigma * Matrix<Scalar>::Identity(dim, dim), horizon),
                         Scalar(1));
}

}  // namespace mbs
