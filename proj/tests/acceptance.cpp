// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Arguments select criteria by number; none runs all twelve.

#include "mbscore/evalsuite.hpp"
#include "mbscore/regressor.hpp"
#include "mbscore/sampler.hpp"
#include "mbscore/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

using namespace mbs;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const char* fmt_str, ...) __attribute__((format(printf, 3, 4)));
};

void Outcome::require(bool ok, const char* fmt_str, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt_str);
  std::vsnprintf(buf, sizeof(buf), fmt_str, args);
  va_end(args);
  if (!detail.empty()) detail += "; ";
  detail += std::string(ok ? "" : "!") + buf;
  pass = pass && ok;
}

void absorb(Outcome& o, const VerifyReport& rep) {
  for (const auto& r : rep.rows) o.require(r.pass, "%s=%.4g (%s)", r.check.c_str(), r.value, r.target.c_str());
}

VectorXd v1(double x) { return VectorXd::Constant(1, x); }

// ---------------------------------------------------------------------------

Outcome linear_equivalence_rows(bool scores) {
  Outcome o;
  const auto rep = verify_linear_equivalence({});
  for (const auto& r : rep.rows) {
    const bool is_score = r.check.rfind("score", 0) == 0;
    if (is_score == scores) o.require(r.pass, "%s=%.3g (%s)", r.check.c_str(), r.value, r.target.c_str());
  }
  return o;
}

Outcome crit1() { return linear_equivalence_rows(true); }
Outcome crit2() { return linear_equivalence_rows(false); }

Outcome crit3() {
  Outcome o;
  absorb(o, verify_singularity({}));
  return o;
}

Outcome crit4() {
  Outcome o;
  absorb(o, verify_covering({}));
  return o;
}

Outcome crit5() {
  Outcome o;
  absorb(o, verify_ito_residual({}));
  return o;
}

// Bismut formula on linear VP with a standard normal X_0: X_t ~ N(0, 1), score -y.
Outcome crit6() {
  Outcome o;
  const auto spec = linear_sde(vp_schedule<double>(0.1, 0.1));
  const TimeGrid<double> grid(0.0, 1.0, 1000);
  const auto ens = simulate_skorokhod(spec, grid, gaussian_initial(v1(0.0), 1.0, 61), 100000, 62);
  ConditionalEstimator est;
  est.kernel = KernelKind::Box;
  est.bandwidth = v1(0.02);
  est.seed = 63;
  for (double y : {-1.0, 0.0, 1.0}) {
    const auto r = conditional_score(ens.samples, v1(y), est);
    o.require(std::abs(r.score(0) + y) <= 3.0 * r.standard_error(0), "y=%g est=%.4f target=%.4f se=%.4f", y,
              r.score(0), -y, r.standard_error(0));
  }
  return o;
}

Outcome crit7() {
  Outcome o;
  const auto spec = cubic_sde<double>(1.0, 6.0, 1);
  const auto ens = simulate_skorokhod(spec, TimeGrid<double>::with_step(6.0, 1e-3), point_mass(v1(0.0)), 200000, 71);
  ConditionalEstimator est;
  est.seed = 72;
  for (double y : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const auto r = conditional_score(ens.samples, v1(y), est);
    const double target = -2.0 * y * y * y;
    const double tol = y == 0.0 ? 3.0 * r.standard_error(0) : std::max(0.15, 3.0 * r.standard_error(0));
    o.require(std::abs(r.score(0) - target) <= tol, "y=%g est=%.4f target=%.4f se=%.4f", y, r.score(0), target,
              r.standard_error(0));
  }
  return o;
}

// Mid-horizon: compare with the log-derivative of a Gaussian KDE of 10^6
// independent endpoints (Silverman bandwidth, central difference).
Outcome crit8() {
  Outcome o;
  const auto spec = cubic_sde<double>(1.0, 1.0, 1);
  const auto grid = TimeGrid<double>::with_step(1.0, 1e-3);
  const VectorXd x0 = v1(0.5);
  const auto ens = simulate_skorokhod(spec, grid, point_mass(x0), 200000, 81);
  const MatrixXd ends = simulate_endpoints(spec, grid, point_mass(x0), 1000000, 82);
  const double h = silverman_bandwidth(ends)(0);
  auto log_kde = [&](double y) {
    const double s = ((ends.row(0).array() - y) / h).square().unaryExpr([](double q) { return std::exp(-0.5 * q); }).sum();
    return std::log(s);
  };
  ConditionalEstimator est;
  est.seed = 83;
  double worst = 0;
  for (int i = 0; i < 13; ++i) {
    const double y = -1.5 + 0.25 * i;
    const double fd = 1e-3;
    const double oracle = (log_kde(y + fd) - log_kde(y - fd)) / (2 * fd);
    const auto r = conditional_score(ens.samples, v1(y), est);
    const double err = std::abs(r.score(0) - oracle);
    worst = std::max(worst, err);
    if (err > 0.15) o.require(false, "y=%g est=%.4f kde=%.4f", y, r.score(0), oracle);
  }
  o.require(worst <= 0.15, "13 points, max |est - kde| = %.4f (<= 0.15), kde bandwidth %.4f", worst, h);
  return o;
}

Outcome crit9() {
  Outcome o;
  const auto spec = cubic_sde<double>(1.0, 1.0, 1);
  const TimeGrid<double> grid(0.0, 1.0, 1000);
  const BrownianStore store(91, 1, grid);
  RngStream rng(92, 0);
  double worst = 0;
  const int n = 30;
  for (int c = 0; c < n; ++c) {
    const std::size_t p = rng.index(100000), k = rng.index(grid.n_steps);
    worst = std::max(worst, dgamma_bump_error(spec, grid, v1(0.0), store.increments(p), k, 0, 1e-3));
  }
  o.require(worst <= 5e-2, "%d random (path, t) checks, max rel err %.3g (<= 5e-2)", n, worst);
  return o;
}

Outcome crit10() {
  Outcome o;
  // gradient agreement on a two-layer toy net
  const MlpModel toy = MlpModel::create(3, {8, 8}, 2, 101);
  RngStream rng(102, 0);
  MatrixXd zi(3, 16), zt(2, 16);
  for (Eigen::Index i = 0; i < zi.size(); ++i) zi(i) = rng.normal();
  for (Eigen::Index i = 0; i < zt.size(); ++i) zt(i) = rng.normal();
  VectorXd grad;
  mse_loss(toy, zi, zt, &grad);
  MlpModel probe = toy;
  const VectorXd theta = toy.parameters();
  double worst = 0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta, tm = theta;
    tp(i) += 1e-5;
    tm(i) -= 1e-5;
    probe.set_parameters(tp);
    const double lp = mse_loss(probe, zi, zt);
    probe.set_parameters(tm);
    const double fd = (lp - mse_loss(probe, zi, zt)) / 2e-5;
    const double scale = std::max(std::abs(fd), std::abs(grad(i)));
    worst = std::max(worst, scale < 1e-8 ? std::abs(fd - grad(i)) : std::abs(fd - grad(i)) / scale);
  }
  o.require(worst <= 1e-5, "gradient max rel err %.3g (<= 1e-5)", worst);

  // OU with a standard normal prior: trained E[X_0 | X_t] against the exact posterior
  const auto sched = vp_schedule<double>(0.1, 0.1);
  const auto spec = linear_sde(sched);
  const auto ens = simulate_forward(spec, TimeGrid<double>(0.0, 1.0, 500), gaussian_initial(v1(0.0), 1.0, 103), 8000, 104);
  const auto data = build_training_set(ens, 0.1, 105);
  MlpModel model = MlpModel::create(2, {64, 64, 64}, 1, 106);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batches_per_epoch = 100;
  cfg.seed = 107;
  train(model, data, cfg);
  const GaussianMixturePrior<double> prior({1.0}, {v1(0.0)}, {MatrixXd::Identity(1, 1)});
  double se = 0;
  int count = 0;
  for (double t : {0.05, 0.1, 0.25, 0.5, 0.75, 1.0})
    for (int i = 0; i <= 16; ++i) {
      const double y = -2.0 + 0.25 * i;
      const double exact = exact_gaussian_posterior<double>(prior, v1(y), MatrixXd::Constant(1, 1, sched.mean_factor(t)),
                                                            closed_form_gamma(sched, t))
                               .mean(0);
      const double pred = predict(model, MatrixXd::Constant(1, 1, y), t)(0, 0);
      se += (pred - exact) * (pred - exact);
      ++count;
    }
  const double rms = std::sqrt(se / count);
  o.require(rms <= 5e-2, "OU posterior RMS gap %.4f (<= 5e-2) over %d (t, y) points", rms, count);
  return o;
}

Outcome crit11() {
  Outcome o;
  const auto sched = vp_schedule<double>(0.1, 20.0, 2);
  const auto spec = linear_sde(sched);
  DatasetSpec ds;
  ds.n_points = 8000;
  ds.gmm_std = 0.1;
  ds.seed = 111;
  auto data = std::make_shared<const MatrixXd>(generate_dataset(ds));
  const auto ens = simulate_forward(spec, TimeGrid<double>(0.0, 1.0, 500), dataset_initial(data), 8000, 112);
  const auto training = build_training_set(ens, 0.1, 113);
  auto model = std::make_shared<MlpModel>(MlpModel::create(3, {64, 64, 64}, 2, 114));
  model->residual = sched;
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batches_per_epoch = 100;
  cfg.seed = 115;
  train(*model, training, cfg);

  ReverseRun run;
  run.field = std::make_shared<LinearScoreField>(std::make_shared<ClosedFormMoments>(sched),
                                                 std::make_shared<RegressorMean>(model), 0.0);
  run.spec = spec;
  run.steps = 500;
  run.seed = 116;
  const auto res = reverse_sample(run, 4000);
  DatasetSpec held = ds;
  held.seed = 117;
  held.n_points = 4000;
  MetricsConfig mc;
  mc.gmm8 = true;
  mc.gmm_std = 0.1;
  mc.seed = 118;
  const auto rep = assemble_report(res.samples, generate_dataset(held), mc);
  o.require(*rep.mode_coverage >= 7, "mode coverage %zu/8 (>= 7)", *rep.mode_coverage);
  o.require(rep.mmd <= 0.2 * rep.mmd_prior, "MMD^2 %.5f vs prior %.5f, ratio %.3f (<= 0.2)", rep.mmd, rep.mmd_prior,
            rep.mmd / rep.mmd_prior);
  return o;
}

Outcome crit12() {
  Outcome o;
  set_default_threads(1);
  VerifyOptions opts;
  opts.seed = 121;
  for (const auto& name : suite_names()) {
    const auto a = run_suite(name, opts);
    const auto b = run_suite(name, opts);
    o.require(a.csv() == b.csv() && a.detail_csv == b.detail_csv, "%s rerun bitwise identical", name.c_str());
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "linear Malliavin-Bismut score equals the transition-density score", 30, crit1},
      {2, "closed-form gamma and gamma^-1 against quadrature", 10, crit2},
      {3, "singularity slopes of gamma^-1 near t = 0", 5, crit3},
      {4, "covering identity M = I", 5, crit4},
      {5, "pathwise Ito identity residual and order", 60, crit5},
      {6, "Bismut Monte Carlo on linear VP", 180, crit6},
      {7, "cubic stationary score", 900, crit7},
      {8, "cubic mid-horizon KDE oracle", 1200, crit8},
      {9, "D_t gamma bump oracle", 120, crit9},
      {10, "regressor gradient and OU posterior gap", 600, crit10},
      {11, "Gmm8 end-to-end generative property", 1800, crit11},
      {12, "verify suites rerun bitwise", 600, crit12},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    set_default_threads(1);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, "exception: %s", e.what());
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(sec <= c.budget_s, "runtime %.1fs (<= %.0fs)", sec, c.budget_s);
    std::printf("%s [%02d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
