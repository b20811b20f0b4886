#include "mbscore/regressor.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mbs;

namespace {

// max over parameters of |a - f| / max(|a|, |f|); pairs with both below 1e-8
// (pure cancellation noise of the difference quotient) are compared absolutely.
double gradient_check(const MlpModel& model, const MatrixXd& zi, const MatrixXd& zt, double h) {
  VectorXd grad;
  mse_loss(model, zi, zt, &grad);
  MlpModel probe = model;
  const VectorXd theta = model.parameters();
  double worst = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    probe.set_parameters(tp);
    const double lp = mse_loss(probe, zi, zt);
    probe.set_parameters(tm);
    const double lm = mse_loss(probe, zi, zt);
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max(std::abs(fd), std::abs(grad(i)));
    worst = std::max(worst, scale < 1e-8 ? std::abs(fd - grad(i)) : std::abs(fd - grad(i)) / scale);
  }
  return worst;
}

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  RngStream rng(seed, 9);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.normal();
  return m;
}

// beta = 0.1 keeps X_t informative about X_0, so every target is learnable.
PathEnsemble small_ensemble(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1, 2));
  return simulate_forward(spec, TimeGrid<double>(0.0, 1.0, steps), gaussian_initial(VectorXd::Zero(2), 1.0, seed),
                          paths, seed);
}

}  // namespace

TEST_CASE("analytic gradient agrees with central differences") {
  MlpModel model = MlpModel::create(3, {8, 8}, 2, 1);
  const MatrixXd zi = random_matrix(3, 16, 1), zt = random_matrix(2, 16, 2);
  CHECK(gradient_check(model, zi, zt, 1e-5) <= 1e-5);

  SUBCASE("with the residual output parametrization") {
    model.residual = vp_schedule<double>(0.1, 20.0, 2);
    model.output.mean = VectorXd::Constant(2, 0.2);
    model.output.std = VectorXd::Constant(2, 0.7);
    MatrixXd zi2 = zi;
    zi2.row(2) = zi2.row(2).array().abs().min(1.0).max(0.05);  // t in (0, 1]
    CHECK(gradient_check(model, zi2, zt, 1e-5) <= 1e-5);
  }
}

TEST_CASE("training set layout") {
  SUBCASE("one path with two steps gives two examples") {
    const auto ens = small_ensemble(1, 2, 1);
    CHECK(build_training_set(ens, 0.0, 1).size() == 2);
  }
  SUBCASE("examples come from nodes k >= 1 of every path") {
    const auto ens = small_ensemble(40, 25, 2);
    const auto ts = build_training_set(ens, 0.1, 1);
    CHECK(ts.size() + static_cast<std::size_t>(ts.val_inputs.cols()) == 40 * 25);
    CHECK(ts.val_inputs.cols() == 4 * 25);
    const MatrixXd z = ts.input_stats.apply(ts.inputs);
    CHECK(z.rowwise().mean().cwiseAbs().maxCoeff() < 1e-6);
    const VectorXd sd = (z.array().square().rowwise().mean()).sqrt();
    CHECK((sd.array() - 1.0).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("desk preset size: 8000 initial points, 500 steps") {
    const auto spec = linear_sde(vp_schedule<double>(0.1, 20.0, 1));
    const auto ens = simulate_forward(spec, TimeGrid<double>(0.0, 1.0, 500),
                                      gaussian_initial(VectorXd::Zero(1), 1.0, 1), 8000, 1);
    const auto ts = build_training_set(ens, 0.0, 1);
    CHECK(ts.size() == 4000000);
  }
}

TEST_CASE("constant target is learned") {
  const auto spec = linear_sde(vp_schedule<double>(0.1, 20.0, 1));
  const auto ens = simulate_forward(spec, TimeGrid<double>(0.0, 1.0, 50), point_mass(VectorXd::Constant(1, 0.7)), 50, 3);
  const auto ts = build_training_set(ens, 0.0, 1);
  MlpModel model = MlpModel::create(2, {16}, 1, 2);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batches_per_epoch = 50;
  cfg.weight_decay = 0;
  const auto res = train(model, ts, cfg);
  CHECK(res.train_loss.size() == 100);
  const MatrixXd pred = predict(model, ts.inputs.topRows(1), 0.5);
  CHECK((pred.array() - 0.7).abs().maxCoeff() < 0.05);
}

TEST_CASE("memorizes a tiny training set") {
  const auto ens = small_ensemble(4, 5, 4);
  const auto ts = build_training_set(ens, 0.0, 1);
  MlpModel model = MlpModel::create(3, {32, 32}, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.batches_per_epoch = 20;
  cfg.batch_size = 20;
  cfg.learning_rate = 3e-3;
  cfg.weight_decay = 0;
  train(model, ts, cfg);
  double worst = 0;
  for (Eigen::Index j = 0; j < ts.inputs.cols(); ++j) {
    const VectorXd p = predict(model, ts.inputs.col(j).head(2), ts.inputs(2, j)).col(0);
    worst = std::max(worst, (p - ts.targets.col(j)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-2);
}

TEST_CASE("a batch of one equals the matching column bitwise") {
  MlpModel model = MlpModel::create(3, {16, 16}, 2, 7);
  model.residual = vp_schedule<double>(0.1, 20.0, 2);
  const MatrixXd x = random_matrix(2, 33, 3);
  const MatrixXd all = predict(model, x, 0.4);
  for (Eigen::Index j = 0; j < x.cols(); ++j) CHECK((predict(model, x.col(j), 0.4).col(0).array() == all.col(j).array()).all());
  std::vector<char> flags;
  MatrixXd far = MatrixXd::Constant(2, 1, 100.0);
  predict(model, far, 0.4, &flags);
  CHECK(flags.at(0) == 1);
}

TEST_CASE("checkpoints round-trip and resume") {
  const auto ens = small_ensemble(60, 20, 5);
  const auto ts = build_training_set(ens, 0.1, 1);
  MlpModel model = MlpModel::create(3, {16, 16}, 2, 3);
  model.residual = vp_schedule<double>(0.1, 20.0, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batches_per_epoch = 20;
  cfg.batch_size = 64;
  const auto first = train(model, ts, cfg);

  const auto dir = std::filesystem::temp_directory_path() / "mbscore_test_ckpt";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.bin").string();
  save_checkpoint(model, path, &cfg);
  CHECK(std::filesystem::exists(path + ".json"));
  const MlpModel back = load_checkpoint(path);
  CHECK((back.parameters().array() == model.parameters().array()).all());
  CHECK(back.adam.step == model.adam.step);
  CHECK(back.residual.has_value());
  const MatrixXd x = random_matrix(2, 10, 4);
  CHECK((predict(back, x, 0.3).array() == predict(model, x, 0.3).array()).all());

  MlpModel resumed = back;
  cfg.epochs = 2;
  const auto second = train(resumed, ts, cfg);
  const double smoothed = (first.train_loss[7] + first.train_loss[8] + first.train_loss[9]) / 3.0;
  CHECK(second.train_loss.front() <= 2.0 * smoothed);

  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint((dir / "bad.bin").string()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("training configuration is validated") {
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS(cfg.validate());
  cfg = TrainConfig{};
  cfg.learning_rate = -1;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("divergent training is reported") {
  const auto ens = small_ensemble(20, 10, 6);
  const auto ts = build_training_set(ens, 0.0, 1);
  MlpModel model = MlpModel::create(3, {8}, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batches_per_epoch = 10;
  cfg.learning_rate = 1e300;
  CHECK_THROWS_AS(train(model, ts, cfg), NumericError);
}
