#include "mbscore/nonlinear_score.hpp"
#include "mbscore/verify.hpp"

#include <doctest.h>

#include <cmath>

using namespace mbs;

namespace {
VectorXd v1(double x) { return VectorXd::Constant(1, x); }

std::vector<SkorokhodSample> synthetic(std::size_t n, const std::function<double(double)>& delta_of_x, std::uint64_t seed) {
  RngStream rng(seed, 1);
  std::vector<SkorokhodSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].path = i;
    out[i].x_terminal = v1(rng.normal());
    out[i].delta = v1(delta_of_x(out[i].x_terminal(0)));
  }
  return out;
}
}  // namespace

TEST_CASE("linear drift: the Skorokhod integral reduces to the Ito term") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1));
  const TimeGrid<double> grid(0.0, 1.0, 300);
  const BrownianStore store(3, 1, grid);
  const MatrixXd dw = store.increments(0);
  const auto s = skorokhod_nonlinear(spec, grid, v1(0.2), dw);
  CHECK(s.correction.norm() == 0.0);
  const auto track = propagate_first_variation(spec, grid);
  const double g = malliavin_matrix(track, spec, grid).gamma.back()(0, 0);
  double ito = 0;
  for (std::size_t k = 0; k < grid.n_steps; ++k) ito += track.Yinv[k](0, 0) * std::sqrt(0.1) * dw(0, static_cast<Eigen::Index>(k));
  CHECK(s.delta(0) == doctest::Approx(track.Y.back()(0, 0) * ito / g).epsilon(1e-12));
}

TEST_CASE("zero diffusion gives zero Ito term and a flagged gamma") {
  const auto spec = cubic_sde<double>(0.0, 1.0, 1);
  const TimeGrid<double> grid(0.0, 1.0, 100);
  const MatrixXd dw = BrownianStore(1, 1, grid).increments(0);
  const PathTrack path = compute_path_track(spec, grid, v1(0.5), dw);
  CHECK(substituted_ito_term(spec, grid, path, dw, 0) == 0.0);
  CHECK(dgamma_malliavin(spec, grid, path, 10)[0].norm() == 0.0);
  CHECK_FALSE(skorokhod_nonlinear(spec, grid, v1(0.5), dw).valid());
}

TEST_CASE("D_t gamma is zero for linear drift") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1, 2));
  const TimeGrid<double> grid(0.0, 1.0, 50);
  const MatrixXd dw = BrownianStore(1, 2, grid).increments(0);
  const auto d = dgamma_malliavin(spec, grid, compute_path_track(spec, grid, VectorXd::Zero(2), dw), 5);
  REQUIRE(d.size() == 2);
  CHECK(d[0].norm() == 0.0);
  CHECK(d[1].norm() == 0.0);
}

TEST_CASE("D_t gamma against bumped increments") {
  const auto spec = cubic_sde<double>(1.0, 1.0, 1);
  const TimeGrid<double> grid(0.0, 1.0, 1000);
  const BrownianStore store(4, 1, grid);
  for (std::size_t k : {0u, 1u, 250u, 998u, 999u})
    CHECK(dgamma_bump_error(spec, grid, v1(0.0), store.increments(k), k, 0, 1e-3) <= 5e-2);
  const PathTrack path = compute_path_track(spec, grid, v1(0.0), store.increments(0));
  CHECK_THROWS_AS(dgamma_malliavin(spec, grid, path, grid.n_steps), std::out_of_range);
}

TEST_CASE("fast engine matches the direct double sum") {
  const auto spec = cubic_sde<double>(0.7, 1.0, 1);
  const TimeGrid<double> grid(0.0, 1.0, 120);
  const BrownianStore store(8, 1, grid);
  for (std::size_t p = 0; p < 4; ++p) {
    const MatrixXd dw = store.increments(p);
    const auto fast = skorokhod_nonlinear(spec, grid, v1(-0.4), dw, p);
    const auto ref = skorokhod_reference(spec, grid, compute_path_track(spec, grid, v1(-0.4), dw), dw);
    CHECK(fast.delta(0) == doctest::Approx(ref.delta(0)).epsilon(1e-11));
    CHECK(fast.ito(0) == doctest::Approx(ref.ito(0)).epsilon(1e-12));
  }
}

TEST_CASE("Skorokhod samples do not depend on the thread count") {
  const auto spec = cubic_sde<double>(1.0, 1.0, 1);
  const TimeGrid<double> grid(0.0, 1.0, 200);
  set_default_threads(1);
  const auto a = simulate_skorokhod(spec, grid, point_mass(v1(0.0)), 300, 5);
  set_default_threads(3);
  const auto b = simulate_skorokhod(spec, grid, point_mass(v1(0.0)), 300, 5);
  set_default_threads(1);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].delta(0) == b.samples[i].delta(0));
}

TEST_CASE("conditional estimator") {
  ConditionalEstimator est;
  est.bootstrap = 50;
  SUBCASE("constant delta") {
    const auto s = synthetic(2000, [](double) { return 1.5; }, 1);
    for (double y : {-1.0, 0.0, 0.8}) CHECK(conditional_score(s, v1(y), est).score(0) == doctest::Approx(-1.5));
  }
  SUBCASE("odd delta gives zero at the origin within its standard error") {
    const auto s = synthetic(5000, [](double x) { return 2.0 * x * x * x + 0.3 * std::sin(7 * x); }, 2);
    const auto r = conditional_score(s, v1(0.0), est);
    CHECK(std::abs(r.score(0)) <= 3.0 * r.standard_error(0) + 1e-3);
  }
  SUBCASE("box kernel and low effective sample size") {
    est.kernel = KernelKind::Box;
    est.bandwidth = v1(0.01);
    const auto s = synthetic(2000, [](double x) { return x; }, 3);
    const auto r = conditional_score(s, v1(2.5), est);
    CHECK(r.low_confidence);
  }
  SUBCASE("too few samples") {
    CHECK_THROWS(conditional_score(synthetic(999, [](double) { return 0.0; }, 4), v1(0.0), est));
  }
  SUBCASE("silverman bandwidth") {
    MatrixXd pts(1, 4);
    pts << -1, 0, 1, 2;
    const double sd = std::sqrt(((pts.array() - 0.5).square().sum()) / 3.0);
    CHECK(silverman_bandwidth(pts)(0) == doctest::Approx(std::pow(4.0 / (3.0 * 4.0), 0.2) * sd).epsilon(0.01));
  }
}

TEST_CASE("linear VP conditioned Skorokhod mean reproduces the closed-form score") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1));
  const TimeGrid<double> grid(0.0, 1.0, 200);
  const auto ens = simulate_skorokhod(spec, grid, gaussian_initial(v1(0.0), 1.0, 1), 20000, 2);
  ConditionalEstimator est;
  est.bootstrap = 100;
  for (double y : {-1.0, 0.5}) {
    const auto r = conditional_score(ens.samples, v1(y), est);
    CHECK(std::abs(r.score(0) + y) <= 3.0 * r.standard_error(0) + std::abs(y) * r.bandwidth(0) * r.bandwidth(0));
  }
}
