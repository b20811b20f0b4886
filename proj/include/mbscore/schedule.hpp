#pragma once

#include "mbscore/common.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace mbs {

/// Uniform time grid t_k = t0 + k dt, k = 0..n_steps.
///
/// In integer-step mode the grid is 0, 1, ..., n_steps with dt = 1 and scoring
/// starts at node 1.
template <typename Scalar>
struct TimeGrid {
  Scalar t0 = 0;
  Scalar t_end = 1;
  std::size_t n_steps = 1;
  bool integer_steps = false;

  TimeGrid() = default;
  TimeGrid(Scalar t0_, Scalar t_end_, std::size_t n_steps_, bool integer = false)
      : t0(t0_), t_end(t_end_), n_steps(n_steps_), integer_steps(integer) {
    if (n_steps == 0) throw std::invalid_argument("TimeGrid: n_steps must be positive");
    if (!(t_end > t0)) throw std::invalid_argument("TimeGrid: t_end must exceed t0");
    if (t0 < 0) throw std::invalid_argument("TimeGrid: t0 must be non-negative");
  }

  static TimeGrid integer(std::size_t n) { return TimeGrid(0, static_cast<Scalar>(n), n, true); }
  static TimeGrid with_step(Scalar t_end_, Scalar dt_) {
    return TimeGrid(0, t_end_, static_cast<std::size_t>(std::llround(t_end_ / dt_)));
  }

  Scalar dt() const { return (t_end - t0) / static_cast<Scalar>(n_steps); }
  Scalar node(std::size_t k) const { return t0 + static_cast<Scalar>(k) * dt(); }
  std::size_t size() const { return n_steps + 1; }

  /// Index of the node closest to t, clamped to the grid.
  std::size_t nearest(Scalar t) const {
    const Scalar k = std::round((t - t0) / dt());
    if (k <= 0) return 0;
    if (k >= static_cast<Scalar>(n_steps)) return n_steps;
    return static_cast<std::size_t>(k);
  }

  bool operator==(const TimeGrid&) const = default;
};

enum class ScheduleKind { VE, VP, SubVP, ConstLinear, Custom };

inline std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::VE: return "VE";
    case ScheduleKind::VP: return "VP";
    case ScheduleKind::SubVP: return "SubVP";
    case ScheduleKind::ConstLinear: return "ConstLinear";
    case ScheduleKind::Custom: return "Custom";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(std::string_view s) {
  if (s == "VE" || s == "ve") return ScheduleKind::VE;
  if (s == "VP" || s == "vp") return ScheduleKind::VP;
  if (s == "SubVP" || s == "subvp" || s == "sub-VP" || s == "sub-vp") return ScheduleKind::SubVP;
  if (s == "ConstLinear" || s == "const-linear") return ScheduleKind::ConstLinear;
  if (s == "Custom" || s == "custom") return ScheduleKind::Custom;
  throw std::invalid_argument("unknown schedule kind: " + std::string(s));
}

template <typename Scalar>
struct ScheduleParams {
  Eigen::Index dim = 1;
  Scalar horizon = 1;
  Scalar sigma_min = Scalar(0.01);
  Scalar sigma_max = Scalar(50);
  Scalar beta_min = Scalar(0.1);
  Scalar beta_max = Scalar(0.1);
  Matrix<Scalar> drift;      // ConstLinear
  Matrix<Scalar> diffusion;  // ConstLinear
  std::function<Matrix<Scalar>(Scalar)> drift_fn;      // Custom
  std::function<Matrix<Scalar>(Scalar)> diffusion_fn;  // Custom
};

/// Time-dependent linear coefficients of an additive-noise SDE:
/// drift matrix b(t) and diffusion matrix sigma(t).
template <typename Scalar>
class Schedule {
 public:
  Schedule() = default;
  Schedule(ScheduleKind kind, ScheduleParams<Scalar> p) : kind_(kind), p_(std::move(p)) { validate(); }

  ScheduleKind kind() const { return kind_; }
  const ScheduleParams<Scalar>& params() const { return p_; }
  Eigen::Index dim() const { return kind_ == ScheduleKind::ConstLinear ? p_.drift.rows() : p_.dim; }
  Eigen::Index noise_dim() const {
    switch (kind_) {
      case ScheduleKind::ConstLinear: return p_.diffusion.cols();
      case ScheduleKind::Custom: return p_.diffusion_fn(Scalar(0)).cols();
      default: return p_.dim;
    }
  }
  Scalar horizon() const { return p_.horizon; }
  bool isotropic() const {
    return kind_ == ScheduleKind::VE || kind_ == ScheduleKind::VP || kind_ == ScheduleKind::SubVP;
  }

  /// beta(t), affine between beta_min at t=0 and beta_max at t=T.
  Scalar beta(Scalar t) const { return p_.beta_min + (p_.beta_max - p_.beta_min) * t / p_.horizon; }

  /// B(t) = int_0^t beta(s) ds in closed form.
  Scalar integrated_beta(Scalar t) const {
    return p_.beta_min * t + (p_.beta_max - p_.beta_min) * t * t / (Scalar(2) * p_.horizon);
  }

  /// VE noise scale sigma_min (sigma_max/sigma_min)^(t/T).
  Scalar noise_scale(Scalar t) const {
    return p_.sigma_min * std::pow(p_.sigma_max / p_.sigma_min, t / p_.horizon);
  }

  /// Squared scalar diffusion g(t)^2 of the isotropic schedules.
  Scalar g2(Scalar t) const {
    switch (kind_) {
      case ScheduleKind::VE: {
        const Scalar s = noise_scale(t);
        return s * s * Scalar(2) * std::log(p_.sigma_max / p_.sigma_min) / p_.horizon;
      }
      case ScheduleKind::VP: return beta(t);
      case ScheduleKind::SubVP: return beta(t) * (Scalar(1) - std::exp(Scalar(-2) * integrated_beta(t)));
      default: throw std::logic_error("g2: schedule is not isotropic");
    }
  }

  /// Scalar drift coefficient a(t) of the isotropic schedules, b(t) = a(t) I.
  Scalar drift_rate(Scalar t) const {
    switch (kind_) {
      case ScheduleKind::VE: return Scalar(0);
      case ScheduleKind::VP:
      case ScheduleKind::SubVP: return Scalar(-0.5) * beta(t);
      default: throw std::logic_error("drift_rate: schedule is not isotropic");
    }
  }

  Matrix<Scalar> drift_matrix(Scalar t) const {
    switch (kind_) {
      case ScheduleKind::ConstLinear: return p_.drift;
      case ScheduleKind::Custom: return p_.drift_fn(t);
      default: return drift_rate(t) * Matrix<Scalar>::Identity(p_.dim, p_.dim);
    }
  }

  Matrix<Scalar> diffusion(Scalar t) const {
    switch (kind_) {
      case ScheduleKind::ConstLinear: return p_.diffusion;
      case ScheduleKind::Custom: return p_.diffusion_fn(t);
      default: return std::sqrt(g2(t)) * Matrix<Scalar>::Identity(p_.dim, p_.dim);
    }
  }

  /// Closed-form first variation Y_t = exp(int_0^t a(s) ds) of the isotropic schedules.
  Scalar mean_factor(Scalar t) const {
    if (kind_ == ScheduleKind::VE) return Scalar(1);
    return std::exp(Scalar(-0.5) * integrated_beta(t));
  }

  /// Closed-form scalar Malliavin variance gamma(t) (gamma = v(t) I).
  Scalar closed_form_variance(Scalar t) const {
    switch (kind_) {
      case ScheduleKind::VE: {
        const Scalar r = p_.sigma_max / p_.sigma_min;
        return p_.sigma_min * p_.sigma_min * std::expm1(Scalar(2) * t / p_.horizon * std::log(r));
      }
      case ScheduleKind::VP: return -std::expm1(-integrated_beta(t));
      case ScheduleKind::SubVP: {
        const Scalar v = -std::expm1(-integrated_beta(t));
        return v * v;
      }
      default: throw std::invalid_argument("closed-form gamma is available for VE, VP and SubVP only");
    }
  }

 private:
  void validate() const {
    switch (kind_) {
      case ScheduleKind::VE:
        if (!(p_.sigma_min > 0)) throw std::invalid_argument("VE: sigma_min must be positive");
        if (!(p_.sigma_max > p_.sigma_min)) throw std::invalid_argument("VE: sigma_max must exceed sigma_min");
        break;
      case ScheduleKind::VP:
      case ScheduleKind::SubVP:
        if (!(p_.beta_min > 0)) throw std::invalid_argument("VP/SubVP: beta_min must be positive");
        if (p_.beta_max < p_.beta_min) throw std::invalid_argument("VP/SubVP: beta_max must be >= beta_min");
        break;
      case ScheduleKind::ConstLinear:
        if (p_.drift.rows() == 0 || p_.drift.rows() != p_.drift.cols())
          throw std::invalid_argument("ConstLinear: drift must be square and non-empty");
        if (p_.diffusion.rows() != p_.drift.rows() || p_.diffusion.cols() == 0)
          throw std::invalid_argument("ConstLinear: diffusion must be m x d");
        break;
      case ScheduleKind::Custom:
        if (!p_.drift_fn || !p_.diffusion_fn) throw std::invalid_argument("Custom: drift_fn and diffusion_fn required");
        break;
    }
    if (!(p_.horizon > 0)) throw std::invalid_argument("schedule horizon must be positive");
    if (isotropic() && p_.dim < 1) throw std::invalid_argument("schedule dimension must be >= 1");
  }

  ScheduleKind kind_ = ScheduleKind::VP;
  ScheduleParams<Scalar> p_{};
};

template <typename Scalar>
Schedule<Scalar> make_schedule(ScheduleKind kind, ScheduleParams<Scalar> params) {
  return Schedule<Scalar>(kind, std::move(params));
}

template <typename Scalar = double>
Schedule<Scalar> ve_schedule(Scalar sigma_min, Scalar sigma_max, Eigen::Index dim = 1, Scalar horizon = 1) {
  ScheduleParams<Scalar> p;
  p.dim = dim;
  p.horizon = horizon;
  p.sigma_min = sigma_min;
  p.sigma_max = sigma_max;
  return make_schedule(ScheduleKind::VE, std::move(p));
}

template <typename Scalar = double>
Schedule<Scalar> vp_schedule(Scalar beta_min, Scalar beta_max, Eigen::Index dim = 1, Scalar horizon = 1) {
  ScheduleParams<Scalar> p;
  p.dim = dim;
  p.horizon = horizon;
  p.beta_min = beta_min;
  p.beta_max = beta_max;
  return make_schedule(ScheduleKind::VP, std::move(p));
}

template <typename Scalar = double>
Schedule<Scalar> subvp_schedule(Scalar beta_min, Scalar beta_max, Eigen::Index dim = 1, Scalar horizon = 1) {
  ScheduleParams<Scalar> p;
  p.dim = dim;
  p.horizon = horizon;
  p.beta_min = beta_min;
  p.beta_max = beta_max;
  return make_schedule(ScheduleKind::SubVP, std::move(p));
}

template <typename Scalar = double>
Schedule<Scalar> const_linear_schedule(Matrix<Scalar> drift, Matrix<Scalar> diffusion, Scalar horizon = 1) {
  ScheduleParams<Scalar> p;
  p.dim = drift.rows();
  p.horizon = horizon;
  p.drift = std::move(drift);
  p.diffusion = std::move(diffusion);
  return make_schedule(ScheduleKind::ConstLinear, std::move(p));
}

}  // namespace mbs
