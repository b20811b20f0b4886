#include "mbscore/sampler.hpp"

#include <cmath>

namespace mbs {

namespace {
constexpr std::size_t kBlock = 256;
}

double ReverseRun::resolved_prior_std() const {
  if (prior_std) return *prior_std;
  return spec.schedule().kind() == ScheduleKind::VE ? spec.schedule().params().sigma_max : 1.0;
}

void ReverseRun::validate() const {
  if (!field) throw std::invalid_argument("reverse_sample: score field is missing");
  if (steps < 1) throw std::invalid_argument("reverse_sample: steps must be >= 1");
  if (!(resolved_prior_std() >= 0)) throw std::invalid_argument("reverse_sample: prior std must be >= 0");
}

ReverseResult reverse_sample(const ReverseRun& run, std::size_t n_samples) {
  run.validate();
  if (n_samples == 0) throw std::invalid_argument("reverse_sample: n_samples must be >= 1");
  const auto& spec = run.spec;
  const Eigen::Index m = spec.dim();
  const Eigen::Index d = spec.noise_dim();
  const double horizon = spec.schedule().horizon();
  const double dt = horizon / static_cast<double>(run.steps);
  const double s0 = run.resolved_prior_std();
  const auto n = static_cast<Eigen::Index>(n_samples);

  ReverseResult out;
  out.samples.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      out.samples(i, j) = s0 * CounterRng::normal(run.seed, rng_domain::kSampler + static_cast<std::uint64_t>(j),
                                                  static_cast<std::uint64_t>(i));
  if (run.keep_trajectories) out.trajectory.push_back(out.samples);

  const std::size_t n_blocks = (n_samples + kBlock - 1) / kBlock;
  for (std::size_t step = 1; step <= run.steps; ++step) {
    const double t = horizon - static_cast<double>(step - 1) * horizon / static_cast<double>(run.steps);
    out.times.push_back(t);
    const MatrixXd a = spec.drift_matrix(t);
    const MatrixXd g = spec.diffusion(t);
    const MatrixXd ggt = g * g.transpose();
    const double sq = std::sqrt(dt);
    parallel_for(n_blocks, [&](std::size_t blk) {
      const auto lo = static_cast<Eigen::Index>(blk * kBlock);
      const Eigen::Index cnt = std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlock), n - lo);
      auto x = out.samples.middleCols(lo, cnt);
      const MatrixXd s = run.field->score(t, x);
      if (s.rows() != m || s.cols() != cnt || !s.allFinite())
        throw NumericError("reverse_sample: non-finite score at step " + std::to_string(step) +
                           " (t = " + std::to_string(t) + ")");
      MatrixXd f = a.lazyProduct(x);
      if (!spec.linear()) f.array() -= spec.cubic() * x.array().cube();
      MatrixXd xi(d, cnt);
      for (Eigen::Index j = 0; j < cnt; ++j)
        for (Eigen::Index i = 0; i < d; ++i)
          xi(i, j) = CounterRng::normal(run.seed, rng_domain::kSampler + static_cast<std::uint64_t>(lo + j),
                                        static_cast<std::uint64_t>(m + static_cast<Eigen::Index>(step - 1) * d + i));
      x -= (f - ggt.lazyProduct(s)) * dt;
      x += sq * g.lazyProduct(xi);
    });
    if (!out.samples.allFinite())
      throw NumericError("reverse_sample: samples became non-finite at step " + std::to_string(step));
    if (run.keep_trajectories) out.trajectory.push_back(out.samples);
  }
  out.times.push_back(horizon - static_cast<double>(run.steps) * horizon / static_cast<double>(run.steps));
  return out;
}

}  // namespace mbs
