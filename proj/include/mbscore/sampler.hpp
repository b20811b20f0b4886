#pragma once

#include "mbscore/linear_score.hpp"

namespace mbs {

/// Reverse-time Euler-Maruyama sampling driven by a score field.
struct ReverseRun {
  std::shared_ptr<const ScoreField> field;
  SdeSpec<double> spec;
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  bool keep_trajectories = false;
  /// Standard deviation of the isotropic Gaussian prior; unset selects
  /// sigma_max for VE and 1 otherwise.
  std::optional<double> prior_std;

  double resolved_prior_std() const;
  void validate() const;
};

struct ReverseResult {
  MatrixXd samples;                   // m x n
  std::vector<MatrixXd> trajectory;   // steps + 1 snapshots when retained
  std::vector<double> times;          // steps + 1: start time of each step, then the end time
};

/// Starts from the prior at T and applies, for step = 1..steps with
/// t = T - (step - 1) T / steps,
///   x <- x - [f(t, x) - G G^T s(t, x)] dt + G sqrt(dt) xi,
/// so the last score query happens at T / steps and t = 0 is never reached.
/// Chains use their own counter streams and are scored in fixed blocks, so the
/// output does not depend on the thread count. Throws NumericError when the
/// field returns a non-finite value.
ReverseResult reverse_sample(const ReverseRun& run, std::size_t n_samples);

/// Score field that is identically zero.
class ZeroScoreField final : public ScoreField {
 public:
  MatrixXd score(double, const MatrixXd& points) const override {
    return MatrixXd::Zero(points.rows(), points.cols());
  }
};

}  // namespace mbs
