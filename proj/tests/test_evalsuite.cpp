#include "mbscore/evalsuite.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mbs;

namespace {

MatrixXd gaussian_cloud(std::size_t n, double mx, double my, double sd, std::uint64_t seed) {
  RngStream rng(seed, 3);
  MatrixXd out(2, static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    out(0, j) = mx + sd * rng.normal();
    out(1, j) = my + sd * rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("datasets") {
  DatasetSpec ds;
  ds.n_points = 4000;
  SUBCASE("gmm8 means and symmetry") {
    const MatrixXd mu = gmm8_means();
    for (int i = 0; i < 8; ++i) {
      CHECK(mu(0, i) == std::cos(2 * std::numbers::pi * i / 8));
      CHECK(mu(1, i) == std::sin(2 * std::numbers::pi * i / 8));
    }
    const MatrixXd x = generate_dataset(ds);
    const VectorXd mean = x.rowwise().mean();
    for (int i = 0; i < 2; ++i) {
      const double sd = std::sqrt((x.row(i).array() - mean(i)).square().sum() / (x.cols() - 1));
      CHECK(std::abs(mean(i)) <= 3.0 * sd / std::sqrt(double(x.cols())));
    }
    CHECK((generate_dataset(ds).array() == x.array()).all());
  }
  SUBCASE("checkerboard points lie in active cells") {
    ds.kind = DatasetKind::Checkerboard;
    const MatrixXd x = generate_dataset(ds);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const int cx = std::min(3, static_cast<int>((x(0, j) + 2.0) / 1.0));
      const int cy = std::min(3, static_cast<int>((x(1, j) + 2.0) / 1.0));
      REQUIRE((cx + cy) % 2 == 0);
    }
  }
  SUBCASE("swiss roll stays near its box") {
    ds.kind = DatasetKind::SwissRoll;
    const MatrixXd x = generate_dataset(ds);
    CHECK(x.cwiseAbs().maxCoeff() < 2.0 + 5 * ds.swiss_noise);
  }
  CHECK(parse_dataset_kind("swiss-roll") == DatasetKind::SwissRoll);
  CHECK_THROWS(parse_dataset_kind("moons"));
}

TEST_CASE("MMD") {
  const MatrixXd x = gaussian_cloud(500, 0, 0, 1, 1);
  const MatrixXd x2 = gaussian_cloud(500, 0, 0, 1, 2);
  const MatrixXd y = gaussian_cloud(500, 10, 10, 1, 3);
  CHECK(std::abs(mmd(x, x)) < 1e-12);
  const double h = median_bandwidth(x, y);
  CHECK(mmd(x, y, h) > 50.0 * mmd(x, x2, h));

  const MatrixXd halves = gaussian_cloud(400, 0.5, -0.5, 1, 4);
  const auto test = mmd_permutation_test(halves.leftCols(200), halves.rightCols(200), 200, 5);
  CHECK(test.statistic < test.quantile95);
  const auto far = mmd_permutation_test(x.leftCols(200), y.leftCols(200), 200, 5);
  CHECK(far.p_value < 0.01);
}

TEST_CASE("sliced Wasserstein") {
  const MatrixXd x = gaussian_cloud(2000, 0, 0, 1, 1);
  CHECK(sliced_wasserstein(x, x, 16, 1) == doctest::Approx(0.0));

  MatrixXd axes = MatrixXd::Identity(2, 2);
  MatrixXd shifted = x;
  shifted.row(0).array() += 0.8;
  // W1 along the shifted axis is 0.8, along the other axis 0: the mean is 0.4
  CHECK(sliced_wasserstein(x, shifted, axes.col(0)) == doctest::Approx(0.8).epsilon(0.02));
  CHECK(sliced_wasserstein(x, shifted, axes) == doctest::Approx(0.4).epsilon(0.02));

  // N(0, I) vs N(0, 4 I): every direction sees W1(N(0,1), N(0,4)), brute-forced
  // by the sorted coupling of 10^6 draws per side
  RngStream r1(7, 1), r2(7, 2);
  std::vector<double> a(1000000), b(1000000);
  for (auto& v : a) v = r1.normal();
  for (auto& v : b) v = 2.0 * r2.normal();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w += std::abs(a[i] - b[i]);
  w /= static_cast<double>(a.size());
  const MatrixXd wide = gaussian_cloud(2000, 0, 0, 2, 9);
  CHECK(sliced_wasserstein(x, wide, 64, 3) == doctest::Approx(w).epsilon(0.10));

  CHECK(wasserstein1_1d({0.0, 1.0}, {0.0, 1.0, 2.0, 3.0}) == doctest::Approx(1.0));
}

TEST_CASE("mode coverage") {
  DatasetSpec ds;
  ds.n_points = 4000;
  const MatrixXd x = generate_dataset(ds);
  CHECK(mode_coverage(x, gmm8_means(), 0.3) == 8);
  const MatrixXd one = gmm8_means().col(2).replicate(1, 100);
  CHECK(mode_coverage(one, gmm8_means(), 0.3) == 1);
}

TEST_CASE("metrics report") {
  DatasetSpec ds;
  ds.n_points = 2000;
  const MatrixXd truth = generate_dataset(ds);
  MetricsConfig mc;
  mc.gmm8 = true;
  const auto same = assemble_report(truth, truth, mc);
  CHECK(std::abs(same.mmd) < 1e-12);
  CHECK(same.sliced_wasserstein == doctest::Approx(0.0));
  CHECK(same.mmd_prior > 1e-3);
  CHECK(*same.mode_coverage == 8);
  const auto again = assemble_report(truth, truth, mc);
  CHECK(again.to_json(mc) == same.to_json(mc));
  CHECK(same.to_json(mc).find("mmd_prior") != std::string::npos);
  CHECK(same.to_csv().rfind("metric,value\n", 0) == 0);
}
