#pragma once

#include "mbscore/linear_score.hpp"

namespace mbs {

/// Everything the Skorokhod formula needs from one path: states, Y, Y^{-1}, Z
/// and gamma_T (Alg.-1 quadrature).
struct PathTrack {
  MatrixXd states;  // m x (n_steps + 1)
  VariationTrack<double> track;
  MatrixXd gamma;  // gamma at the terminal node
  bool diverged = false;
};

/// Re-simulates X, Y, Y^{-1}, Z and gamma_T for given increments (d x n_steps).
PathTrack compute_path_track(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                             const MatrixXd& increments);

/// F_k^T sum_t Y_t^{-1} sigma(t) dB_t with F_k = Y_T^T gamma^{-1} e_k, for every k.
VectorXd substituted_ito_term(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                              const MatrixXd& increments);
double substituted_ito_term(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const PathTrack& path,
                            const MatrixXd& increments, Eigen::Index k);

/// D_t gamma_T for the increment on [t_k, t_{k+1}), k = t_index, as d matrices
/// (m x m), one per noise direction. The s < t part integrates
/// A_t Y_s^{-1} sigma(s) W_s^T, the s >= t part B_{t,s} W_s^T, symmetrized and
/// summed by the left-rectangle rule. Y^{-1} and Z enter at node k + 1, the
/// first node the increment moves, which makes the result the exact derivative
/// of the discretized gamma_T with respect to that increment.
std::vector<MatrixXd> dgamma_malliavin(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                       const PathTrack& path, std::size_t t_index);

struct SkorokhodSample {
  std::size_t path = 0;
  VectorXd x_terminal;
  VectorXd delta;       // delta(u_k), k = 1..m
  VectorXd ito;         // substituted Ito term
  VectorXd correction;  // time-integrated correction term; delta = ito - correction
  double condition = 0;
  bool flagged = false;   // gamma_T ill-conditioned
  bool diverged = false;  // path left the divergence guard
  bool valid() const { return !flagged && !diverged; }
};

/// Skorokhod integrals delta(u_k) for one path (fast fixed-size engine; the
/// correction's inner s-integrals are prefix/suffix sums).
SkorokhodSample skorokhod_nonlinear(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                                    const MatrixXd& increments, std::size_t path_id = 0);

/// Direct O(n_steps^2) evaluation through dgamma_malliavin at every t; used to
/// cross-check the fast engine.
SkorokhodSample skorokhod_reference(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                    const PathTrack& path, const MatrixXd& increments);

inline constexpr double kMaxConditionNumber = 1e12;
inline constexpr double kMaxDivergedFraction = 0.01;

struct SkorokhodEnsemble {
  std::vector<SkorokhodSample> samples;  // valid samples only
  std::size_t n_paths = 0;
  std::size_t n_diverged = 0;
  std::size_t n_flagged = 0;
};

/// Simulates n_paths paths and keeps their valid Skorokhod samples. Throws
/// NumericError if more than 1% of the paths diverge.
SkorokhodEnsemble simulate_skorokhod(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                                     const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Conditioning on X_T = y

enum class KernelKind { Gaussian, Box };

struct ConditionalEstimator {
  VectorXd bandwidth;  // per coordinate; empty selects Silverman's rule
  KernelKind kernel = KernelKind::Gaussian;
  double min_ess = 50;
  std::size_t bootstrap = 200;
  std::uint64_t seed = 0;
};

struct ConditionalScore {
  VectorXd score;
  VectorXd standard_error;
  VectorXd bandwidth;
  double ess = 0;
  bool low_confidence = false;
};

/// Silverman's rule per coordinate: (4 / ((d + 2) n))^{1/(d+4)} * std.
VectorXd silverman_bandwidth(const MatrixXd& points);

/// Nadaraya-Watson estimate of -E[delta | X_T = y] with a Poisson-bootstrap
/// standard error. Requires at least 1000 samples.
ConditionalScore conditional_score(const std::vector<SkorokhodSample>& samples, const VectorXd& y,
                                   const ConditionalEstimator& estimator);

/// Score field backed by Skorokhod ensembles simulated at a fixed set of
/// horizons; queries use the nearest horizon.
class NonlinearMcField final : public ScoreField {
 public:
  NonlinearMcField(const SdeSpec<double>& spec, double dt, std::vector<double> horizons,
                   const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed,
                   ConditionalEstimator estimator = {});
  MatrixXd score(double t, const MatrixXd& points) const override;

 private:
  std::vector<double> horizons_;
  std::vector<SkorokhodEnsemble> ensembles_;
  ConditionalEstimator estimator_;
};

}  // namespace mbs
