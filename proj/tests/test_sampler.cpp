#include "mbscore/sampler.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace mbs;

namespace {

std::shared_ptr<const ScoreField> gaussian_oracle(const Schedule<double>& s) {
  GaussianMixturePrior<double> prior({1.0}, {VectorXd::Zero(1)}, {MatrixXd::Identity(1, 1)});
  return std::make_shared<LinearScoreField>(std::make_shared<ClosedFormMoments>(s),
                                            std::make_shared<GaussianPosteriorMean>(prior), 0.0);
}

class NanField final : public ScoreField {
 public:
  MatrixXd score(double t, const MatrixXd& points) const override {
    return t < 0.5 ? MatrixXd::Constant(points.rows(), points.cols(), std::nan("")) : MatrixXd::Zero(points.rows(), points.cols());
  }
};

}  // namespace

TEST_CASE("frozen dynamics return the prior draws") {
  MatrixXd zero = MatrixXd::Zero(2, 2);
  ReverseRun run;
  run.field = std::make_shared<ZeroScoreField>();
  run.spec = SdeSpec<double>(const_linear_schedule<double>(zero, zero));
  run.steps = 20;
  run.seed = 4;
  run.prior_std = 1.0;
  const auto res = reverse_sample(run, 50);
  REQUIRE(res.samples.cols() == 50);
  for (Eigen::Index j = 0; j < 50; ++j)
    for (Eigen::Index i = 0; i < 2; ++i)
      CHECK(res.samples(i, j) == CounterRng::normal(4, rng_domain::kSampler + static_cast<std::uint64_t>(j),
                                                     static_cast<std::uint64_t>(i)));
}

TEST_CASE("Gaussian data through VP with the exact field stays standard normal") {
  const auto s = vp_schedule<double>(0.1, 0.1);
  ReverseRun run;
  run.field = gaussian_oracle(s);
  run.spec = linear_sde(s);
  run.steps = 500;
  run.seed = 1;
  const std::size_t n = 10000;
  const auto res = reverse_sample(run, n);
  const Eigen::ArrayXd x = res.samples.row(0).transpose().array();
  const double mean = x.mean();
  const double var = (x - mean).square().sum() / (n - 1);
  CHECK(std::abs(mean) <= 3.0 * std::sqrt(var / n));
  CHECK(std::abs(var - 1.0) <= 0.05);

  // Kolmogorov-Smirnov distance to N(0, 1) at the 1% level
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  double ks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * std::erfc(-v[i] / std::sqrt(2.0));
    ks = std::max({ks, std::abs(cdf - double(i) / n), std::abs(cdf - double(i + 1) / n)});
  }
  CHECK(ks < 1.63 / std::sqrt(double(n)));
}

TEST_CASE("sample count, trajectories and thread invariance") {
  const auto s = vp_schedule<double>(0.1, 20.0);
  ReverseRun run;
  run.field = gaussian_oracle(s);
  run.spec = linear_sde(s);
  run.steps = 40;
  run.seed = 2;
  run.keep_trajectories = true;
  set_default_threads(1);
  const auto a = reverse_sample(run, 700);
  set_default_threads(3);
  const auto b = reverse_sample(run, 700);
  set_default_threads(1);
  CHECK(a.samples.cols() == 700);
  CHECK(a.trajectory.size() == 41);
  CHECK(a.times.size() == 41);
  CHECK(a.times.front() == doctest::Approx(1.0));
  CHECK((a.samples.array() == b.samples.array()).all());
}

TEST_CASE("sampler failures") {
  ReverseRun run;
  run.spec = linear_sde(vp_schedule<double>(0.1, 20.0));
  CHECK_THROWS_AS(reverse_sample(run, 10), std::invalid_argument);
  run.field = std::make_shared<NanField>();
  run.steps = 10;
  CHECK_THROWS_AS(reverse_sample(run, 10), NumericError);
  run.field = std::make_shared<ZeroScoreField>();
  CHECK_THROWS_AS(reverse_sample(run, 0), std::invalid_argument);
  run.spec = linear_sde(ve_schedule<double>(0.01, 50.0));
  CHECK(run.resolved_prior_std() == 50.0);
}
