#pragma once

#include "mbscore/rng.hpp"
#include "mbscore/sde.hpp"

#include <memory>

namespace mbs {

inline constexpr double kDivergenceGuard = 1e10;

/// Drift matrix and diffusion evaluated once per grid node.
struct GridCoefficients {
  std::vector<MatrixXd> drift;      // A(t_k), m x m
  std::vector<MatrixXd> diffusion;  // sigma(t_k), m x d

  GridCoefficients() = default;
  GridCoefficients(const SdeSpec<double>& spec, const TimeGrid<double>& grid) {
    drift.reserve(grid.size());
    diffusion.reserve(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      drift.push_back(spec.drift_matrix(grid.node(k)));
      diffusion.push_back(spec.diffusion(grid.node(k)));
    }
  }
};

/// Brownian increments as a pure function of (seed, path, step).
class BrownianStore {
 public:
  BrownianStore() = default;
  BrownianStore(std::uint64_t seed, Eigen::Index noise_dim, TimeGrid<double> grid)
      : seed_(seed), d_(noise_dim), grid_(grid) {}

  std::uint64_t seed() const { return seed_; }
  Eigen::Index noise_dim() const { return d_; }
  const TimeGrid<double>& grid() const { return grid_; }

  /// d x n_steps; column k is the increment over [t_k, t_{k+1}].
  MatrixXd increments(std::size_t path) const {
    MatrixXd dw(d_, static_cast<Eigen::Index>(grid_.n_steps));
    fill(path, std::span<double>(dw.data(), static_cast<std::size_t>(dw.size())));
    return dw;
  }

  /// Column-major fill of d * n_steps increments.
  void fill(std::size_t path, std::span<double> out) const {
    CounterRng::fill_normal(seed_, rng_domain::kBrownian + path, 0, out);
    const double s = std::sqrt(grid_.dt());
    for (double& v : out) v *= s;
  }

 private:
  std::uint64_t seed_ = 0;
  Eigen::Index d_ = 1;
  TimeGrid<double> grid_{};
};

/// Draws X_0 for a given path index; must be a pure function of the index.
using InitialSampler = std::function<VectorXd(std::size_t)>;

InitialSampler point_mass(VectorXd x0);
InitialSampler gaussian_initial(VectorXd mean, double std, std::uint64_t seed);
/// Cycles through the columns of `points`.
InitialSampler dataset_initial(std::shared_ptr<const MatrixXd> points);

/// Forward Euler-Maruyama trajectories of an ensemble.
struct PathEnsemble {
  SdeSpec<double> spec;
  TimeGrid<double> grid;
  BrownianStore brownian;
  std::vector<MatrixXd> states;  // per path: m x (n_steps + 1)
  std::vector<char> diverged;

  std::size_t n_paths() const { return states.size(); }
  Eigen::Index dim() const { return spec.dim(); }
  auto state(std::size_t path, std::size_t k) const { return states[path].col(static_cast<Eigen::Index>(k)); }
  auto initial(std::size_t path) const { return state(path, 0); }
  auto terminal(std::size_t path) const { return state(path, grid.n_steps); }
  std::size_t n_diverged() const { return static_cast<std::size_t>(std::count(diverged.begin(), diverged.end(), 1)); }
};

/// One Euler-Maruyama path driven by explicit increments (d x n_steps).
/// Returns false if the path left the divergence guard; remaining columns are NaN.
bool euler_path(const SdeSpec<double>& spec, const GridCoefficients& coeffs, const TimeGrid<double>& grid,
                const Eigen::Ref<const VectorXd>& x0, const Eigen::Ref<const MatrixXd>& increments,
                Eigen::Ref<MatrixXd> states);

PathEnsemble simulate_forward(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                              const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed);

/// Terminal states only (m x n_paths), for ensembles too large to keep.
/// Diverged paths are reported through `diverged` (may be null) and hold NaN.
MatrixXd simulate_endpoints(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                            const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed,
                            std::vector<char>* diverged = nullptr);

/// Left-point Ito sum  sum_k f(t_k) dW_k  over the path's stored increments.
VectorXd ito_integral(const PathEnsemble& ensemble, std::size_t path,
                      const std::function<MatrixXd(double)>& integrand);
/// Same, rejecting a grid different from the ensemble's.
VectorXd ito_integral(const PathEnsemble& ensemble, const TimeGrid<double>& grid, std::size_t path,
                      const std::function<MatrixXd(double)>& integrand);

}  // namespace mbs
