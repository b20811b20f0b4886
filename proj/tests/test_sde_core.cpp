#include "mbscore/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace mbs;

TEST_CASE("counter rng is a pure function of (seed, stream, counter)") {
  const double a = CounterRng::normal(7, 3, 11);
  CHECK(CounterRng::normal(7, 3, 11) == a);
  CHECK(CounterRng::normal(7, 4, 11) != a);
  CHECK(CounterRng::normal(8, 3, 11) != a);

  RngStream s(1, 2);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    const double u = CounterRng::uniform(3, 5, static_cast<std::uint64_t>(i));
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("schedule endpoints and integrated beta") {
  const auto ve = ve_schedule<double>(0.01, 50.0);
  CHECK(ve.noise_scale(0.0) == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(ve.noise_scale(1.0) == doctest::Approx(50.0).epsilon(1e-14));

  const auto vp = vp_schedule<double>(0.1, 0.1);
  CHECK(vp.integrated_beta(1.0) == doctest::Approx(0.1).epsilon(1e-15));

  // int_0^T g^2 dt by trapezoid at dt = 1e-5 against sigma_max^2 - sigma_min^2
  const std::size_t n = 100000;
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t0 = static_cast<double>(k) / n, t1 = static_cast<double>(k + 1) / n;
    acc += 0.5 * (ve.g2(t0) + ve.g2(t1)) / n;
  }
  CHECK(acc == doctest::Approx(50.0 * 50.0 - 0.01 * 0.01).epsilon(1e-6));
  CHECK(ve.closed_form_variance(1.0) == doctest::Approx(2499.9999).epsilon(1e-12));
}

TEST_CASE("schedule parameter validation") {
  CHECK_THROWS_AS(ve_schedule<double>(50.0, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(ve_schedule<double>(0.01, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(vp_schedule<double>(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(subvp_schedule<double>(-0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(parse_schedule_kind("vpp"), std::invalid_argument);
  CHECK(parse_schedule_kind("subvp") == ScheduleKind::SubVP);
}

TEST_CASE("time grid nodes") {
  const TimeGrid<double> g(0.0, 1.0, 4);
  CHECK(g.size() == 5);
  CHECK(g.node(2) == 0.5);
  CHECK(g.nearest(0.74) == 3);
  const auto gi = TimeGrid<double>::integer(500);
  CHECK(gi.dt() == 1.0);
  CHECK(TimeGrid<double>::with_step(6.0, 1e-3).n_steps == 6000);
}

TEST_CASE("zero dynamics keep the initial point") {
  MatrixXd zero = MatrixXd::Zero(1, 1);
  const SdeSpec<double> spec(const_linear_schedule<double>(zero, zero));
  const TimeGrid<double> grid(0.0, 1.0, 50);
  const auto ens = simulate_forward(spec, grid, point_mass(VectorXd::Constant(1, 3.0)), 4, 1);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t k = 0; k <= grid.n_steps; ++k) CHECK(ens.state(p, k)(0) == 3.0);
}

TEST_CASE("VP mean of X_T from a fixed start") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1));
  const TimeGrid<double> grid(0.0, 1.0, 1000);
  const std::size_t n = 100000;
  const MatrixXd ends = simulate_endpoints(spec, grid, point_mass(VectorXd::Constant(1, 1.0)), n, 3);
  const double mean = ends.mean();
  const double sd = std::sqrt((ends.array() - mean).square().sum() / (n - 1));
  CHECK(std::abs(mean - std::exp(-0.05)) <= 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("cubic drift reaches the stationary fourth moment") {
  // E[x^4] under exp(-x^4/2) by quadrature on [-6, 6]
  double z = 0, m4 = 0;
  const int nq = 200000;
  for (int i = 0; i <= nq; ++i) {
    const double x = -6.0 + 12.0 * i / nq, w = (i == 0 || i == nq) ? 0.5 : 1.0;
    const double p = std::exp(-std::pow(x, 4) / 2.0);
    z += w * p;
    m4 += w * std::pow(x, 4) * p;
  }
  const double target = m4 / z;

  const auto spec = cubic_sde<double>(1.0, 6.0, 1);
  const auto grid = TimeGrid<double>::with_step(6.0, 1e-3);
  const std::size_t n = 20000;
  const MatrixXd ends = simulate_endpoints(spec, grid, point_mass(VectorXd::Zero(1)), n, 5);
  const Eigen::ArrayXd x4 = ends.row(0).array().pow(4).transpose();
  const double mean = x4.mean();
  const double se = std::sqrt((x4 - mean).square().sum() / (n - 1) / n);
  CHECK(std::abs(mean - target) <= 3.0 * se);
}

TEST_CASE("divergence is flagged, not dropped") {
  MatrixXd b = MatrixXd::Constant(1, 1, 50.0);
  const SdeSpec<double> spec(const_linear_schedule<double>(b, MatrixXd::Identity(1, 1), 1.0));
  const TimeGrid<double> grid(0.0, 1.0, 1000);
  const auto ens = simulate_forward(spec, grid, point_mass(VectorXd::Constant(1, 1.0)), 3, 1);
  CHECK(ens.n_paths() == 3);
  CHECK(ens.n_diverged() == 3);
}

TEST_CASE("simulation does not depend on the thread count") {
  const auto spec = cubic_sde<double>(1.0, 1.0, 2);
  const TimeGrid<double> grid(0.0, 1.0, 200);
  set_default_threads(1);
  const auto a = simulate_forward(spec, grid, gaussian_initial(VectorXd::Zero(2), 1.0, 4), 64, 9);
  set_default_threads(4);
  const auto b = simulate_forward(spec, grid, gaussian_initial(VectorXd::Zero(2), 1.0, 4), 64, 9);
  set_default_threads(1);
  for (std::size_t p = 0; p < 64; ++p) CHECK((a.states[p].array() == b.states[p].array()).all());
}

TEST_CASE("ito integral uses the stored increments") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1));
  const TimeGrid<double> grid(0.0, 1.0, 100);
  const std::size_t n = 10000;
  const auto ens = simulate_forward(spec, grid, point_mass(VectorXd::Zero(1)), n, 2);
  CHECK(ito_integral(ens, 0, [](double) { return MatrixXd::Zero(1, 1); })(0) == 0.0);
  double sq = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double bt = ito_integral(ens, p, [](double) { return MatrixXd::Identity(1, 1); })(0);
    CHECK(bt == doctest::Approx(ens.brownian.increments(p).sum()).epsilon(1e-12));
    sq += bt * bt;
  }
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS(ito_integral(ens, TimeGrid<double>(0.0, 1.0, 50), 0, [](double) { return MatrixXd::Identity(1, 1); }));
}

TEST_CASE("Euler solution of a ConstLinear SDE approaches Y_T x0 + Y_T int Y^-1 sigma dB") {
  MatrixXd b = MatrixXd::Constant(1, 1, -0.05);
  const SdeSpec<double> spec(const_linear_schedule<double>(b, MatrixXd::Identity(1, 1)));
  std::vector<double> gaps;
  for (std::size_t n : {100u, 200u, 400u}) {
    const TimeGrid<double> grid(0.0, 1.0, n);
    const auto ens = simulate_forward(spec, grid, point_mass(VectorXd::Constant(1, 1.0)), 500, 3);
    double ss = 0;
    for (std::size_t p = 0; p < 500; ++p) {
      const double yt = std::exp(-0.05);
      const double ito = ito_integral(ens, p, [](double t) { return MatrixXd::Constant(1, 1, std::exp(0.05 * t)); })(0);
      const double gap = ens.terminal(p)(0) - yt * 1.0 - yt * ito;
      ss += gap * gap;
    }
    gaps.push_back(std::sqrt(ss / 500));
  }
  CHECK(gaps[0] / gaps[1] == doctest::Approx(2.0).epsilon(0.1));
  CHECK(gaps[1] / gaps[2] == doctest::Approx(2.0).epsilon(0.1));
}
