#include "mbscore/simulate.hpp"

#include <cmath>
#include <limits>

namespace mbs {

InitialSampler point_mass(VectorXd x0) {
  return [x0 = std::move(x0)](std::size_t) { return x0; };
}

InitialSampler gaussian_initial(VectorXd mean, double std, std::uint64_t seed) {
  return [mean = std::move(mean), std, seed](std::size_t path) {
    VectorXd x(mean.size());
    CounterRng::fill_normal(seed, rng_domain::kInitial + path, 0, std::span<double>(x.data(), x.size()));
    return VectorXd(mean + std * x);
  };
}

InitialSampler dataset_initial(std::shared_ptr<const MatrixXd> points) {
  if (!points || points->cols() == 0) throw std::invalid_argument("dataset_initial: empty dataset");
  return [points = std::move(points)](std::size_t path) {
    return VectorXd(points->col(static_cast<Eigen::Index>(path % static_cast<std::size_t>(points->cols()))));
  };
}

namespace {

template <int M, int D>
bool euler_fixed(const SdeSpec<double>& spec, const GridCoefficients& c, const TimeGrid<double>& grid,
                 const Eigen::Ref<const VectorXd>& x0, const double* dw, double* out_states, bool keep_all,
                 double* out_terminal) {
  using Vec = Eigen::Matrix<double, M, 1>;
  using MatA = Eigen::Matrix<double, M, M>;
  using MatS = Eigen::Matrix<double, M, D>;
  using Inc = Eigen::Matrix<double, D, 1>;
  const Eigen::Index m = spec.dim();
  const Eigen::Index d = spec.noise_dim();
  const double dt = grid.dt();
  const double cubic = spec.cubic();
  Vec x = x0;
  const std::size_t n = grid.n_steps;
  if (keep_all) Eigen::Map<Vec>(out_states, m) = x;
  for (std::size_t k = 0; k < n; ++k) {
    const MatA a = c.drift[k];
    const MatS s = c.diffusion[k];
    Vec b = a * x;
    if (cubic != 0.0) b.array() -= cubic * x.array().cube();
    x += b * dt + s * Eigen::Map<const Inc>(dw + k * static_cast<std::size_t>(d), d);
    if (!(x.cwiseAbs().maxCoeff() <= kDivergenceGuard)) {
      if (keep_all)
        for (std::size_t j = k + 1; j <= n; ++j)
          Eigen::Map<Vec>(out_states + j * static_cast<std::size_t>(m), m)
              .setConstant(std::numeric_limits<double>::quiet_NaN());
      if (out_terminal)
        Eigen::Map<Vec>(out_terminal, m).setConstant(std::numeric_limits<double>::quiet_NaN());
      return false;
    }
    if (keep_all) Eigen::Map<Vec>(out_states + (k + 1) * static_cast<std::size_t>(m), m) = x;
  }
  if (out_terminal) Eigen::Map<Vec>(out_terminal, m) = x;
  return true;
}

bool euler_dispatch(const SdeSpec<double>& spec, const GridCoefficients& c, const TimeGrid<double>& grid,
                    const Eigen::Ref<const VectorXd>& x0, const double* dw, double* out_states, bool keep_all,
                    double* out_terminal) {
  const auto m = spec.dim();
  const auto d = spec.noise_dim();
  if (m == 1 && d == 1) return euler_fixed<1, 1>(spec, c, grid, x0, dw, out_states, keep_all, out_terminal);
  if (m == 2 && d == 2) return euler_fixed<2, 2>(spec, c, grid, x0, dw, out_states, keep_all, out_terminal);
  if (m == 3 && d == 3) return euler_fixed<3, 3>(spec, c, grid, x0, dw, out_states, keep_all, out_terminal);
  return euler_fixed<Eigen::Dynamic, Eigen::Dynamic>(spec, c, grid, x0, dw, out_states, keep_all, out_terminal);
}

}  // namespace

bool euler_path(const SdeSpec<double>& spec, const GridCoefficients& coeffs, const TimeGrid<double>& grid,
                const Eigen::Ref<const VectorXd>& x0, const Eigen::Ref<const MatrixXd>& increments,
                Eigen::Ref<MatrixXd> states) {
  if (states.rows() != spec.dim() || states.cols() != static_cast<Eigen::Index>(grid.size()))
    throw std::invalid_argument("euler_path: state buffer has wrong shape");
  if (increments.rows() != spec.noise_dim() || increments.cols() != static_cast<Eigen::Index>(grid.n_steps))
    throw std::invalid_argument("euler_path: increments have wrong shape");
  // Ref to a contiguous column-major block: outer stride equals rows.
  MatrixXd dw = increments;
  MatrixXd buf(states.rows(), states.cols());
  const bool ok = euler_dispatch(spec, coeffs, grid, x0, dw.data(), buf.data(), true, nullptr);
  states = buf;
  return ok;
}

PathEnsemble simulate_forward(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                              const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed) {
  if (n_paths == 0) throw std::invalid_argument("simulate_forward: n_paths must be >= 1");
  PathEnsemble ens{spec, grid, BrownianStore(seed, spec.noise_dim(), grid), {}, {}};
  ens.states.assign(n_paths, MatrixXd());
  ens.diverged.assign(n_paths, 0);
  const GridCoefficients coeffs(spec, grid);
  const auto m = spec.dim();
  parallel_for(n_paths, [&](std::size_t i) {
    const VectorXd x0 = x0_sampler(i);
    if (x0.size() != m) throw std::invalid_argument("simulate_forward: x0 has wrong dimension");
    MatrixXd dw = ens.brownian.increments(i);
    MatrixXd& st = ens.states[i];
    st.resize(m, static_cast<Eigen::Index>(grid.size()));
    ens.diverged[i] = euler_dispatch(spec, coeffs, grid, x0, dw.data(), st.data(), true, nullptr) ? 0 : 1;
  });
  return ens;
}

MatrixXd simulate_endpoints(const SdeSpec<double>& spec, const TimeGrid<double>& grid,
                            const InitialSampler& x0_sampler, std::size_t n_paths, std::uint64_t seed,
                            std::vector<char>* diverged) {
  if (n_paths == 0) throw std::invalid_argument("simulate_endpoints: n_paths must be >= 1");
  const BrownianStore store(seed, spec.noise_dim(), grid);
  const GridCoefficients coeffs(spec, grid);
  MatrixXd out(spec.dim(), static_cast<Eigen::Index>(n_paths));
  if (diverged) diverged->assign(n_paths, 0);
  const std::size_t nd = static_cast<std::size_t>(spec.noise_dim()) * grid.n_steps;
  parallel_for(n_paths, [&](std::size_t i) {
    thread_local std::vector<double> dw;
    dw.resize(nd);
    store.fill(i, dw);
    const VectorXd x0 = x0_sampler(i);
    const bool ok = euler_dispatch(spec, coeffs, grid, x0, dw.data(), nullptr, false,
                                   out.col(static_cast<Eigen::Index>(i)).data());
    if (diverged) (*diverged)[i] = ok ? 0 : 1;
  });
  return out;
}

VectorXd ito_integral(const PathEnsemble& ensemble, std::size_t path,
                      const std::function<MatrixXd(double)>& integrand) {
  const auto& grid = ensemble.grid;
  const MatrixXd dw = ensemble.brownian.increments(path);
  VectorXd acc = VectorXd::Zero(ensemble.dim());
  for (std::size_t k = 0; k < grid.n_steps; ++k) {
    const MatrixXd f = integrand(grid.node(k));
    if (f.rows() != ensemble.dim() || f.cols() != dw.rows())
      throw std::invalid_argument("ito_integral: integrand must be m x d");
    acc += f * dw.col(static_cast<Eigen::Index>(k));
  }
  return acc;
}

VectorXd ito_integral(const PathEnsemble& ensemble, const TimeGrid<double>& grid, std::size_t path,
                      const std::function<MatrixXd(double)>& integrand) {
  if (!(grid == ensemble.grid)) throw std::invalid_argument("ito_integral: grid does not match the ensemble grid");
  return ito_integral(ensemble, path, integrand);
}

}  // namespace mbs
