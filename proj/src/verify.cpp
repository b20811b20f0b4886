#include "mbscore/verify.hpp"

#include <cmath>
#include <cstdio>

namespace mbs {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string bound(const char* rel, double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s %g", rel, v);
  return buf;
}

VerifyRow at_most(std::string check, double value, double limit) {
  return {std::move(check), value, bound("<=", limit), value <= limit};
}

VerifyRow at_least(std::string check, double value, double limit) {
  return {std::move(check), value, bound(">=", limit), value >= limit};
}

VerifyRow within(std::string check, double value, double target, double tol) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g +- %g", target, tol);
  return {std::move(check), value, buf, std::abs(value - target) <= tol};
}

VectorXd scalar(double v) { return VectorXd::Constant(1, v); }

}  // namespace

double relative_error(double a, double b) {
  const double d = std::abs(a - b);
  return b == 0 ? d : d / std::abs(b);
}

bool VerifyReport::passed() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

std::string VerifyReport::table() const {
  std::string s;
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-4s %-48s %-14.6g %s\n", r.pass ? "PASS" : "FAIL", r.check.c_str(), r.value,
                  r.target.c_str());
    s += buf;
  }
  return s;
}

std::string VerifyReport::csv() const {
  std::string s = "suite,check,value,target,pass\n";
  for (const auto& r : rows) s += suite + "," + r.check + "," + num(r.value) + "," + r.target + "," + (r.pass ? "1" : "0") + "\n";
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<std::string, Schedule<double>>> identity_schedules() {
  return {{"ve", ve_schedule<double>(0.01, 50.0)},
          {"vp", vp_schedule<double>(0.1, 0.1)},
          {"subvp", subvp_schedule<double>(0.1, 0.1)}};
}

}  // namespace

VerifyReport verify_linear_equivalence(const VerifyOptions&) {
  VerifyReport rep;
  rep.suite = "linear-equivalence";
  rep.detail_csv = "schedule,x0,t,y,score_mb,score_fp,rel_err,score_quad,rel_err_quad\n";
  const std::vector<double> times{0.1, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> x0s{-1.0, 0.0, 1.0};
  double worst_closed = 0, worst_quad = 0;
  for (const auto& [name, sched] : identity_schedules()) {
    const auto closed = std::make_shared<ClosedFormMoments>(sched);
    const auto quad = std::make_shared<QuadratureMoments>(linear_sde(sched), TimeGrid<double>(0.0, 1.0, 10000), 0.0);
    for (double x0 : x0s) {
      const auto mean = std::make_shared<PointMassMean>(scalar(x0));
      const LinearScoreField fc(closed, mean), fq(quad, mean);
      for (double t : times)
        for (int i = 0; i < 9; ++i) {
          const double y = -2.0 + 0.5 * i;
          const double fp = fokker_planck_score_oracle<double>(sched, t, scalar(y), scalar(x0))(0);
          const double mb = fc.score_at(t, scalar(y))(0);
          const double mq = fq.score_at(t, scalar(y))(0);
          const double ec = relative_error(mb, fp), eq = relative_error(mq, fp);
          worst_closed = std::max(worst_closed, ec);
          worst_quad = std::max(worst_quad, eq);
          rep.detail_csv += name + "," + num(x0) + "," + num(t) + "," + num(y) + "," + num(mb) + "," + num(fp) + "," +
                            num(ec) + "," + num(mq) + "," + num(eq) + "\n";
        }
    }
  }
  rep.rows.push_back(at_most("score closed-form max rel err", worst_closed, 1e-6));
  rep.rows.push_back(at_most("score quadrature(dt=1e-4) max rel err", worst_quad, 1e-2));

  // gamma and gamma^{-1}: closed form vs left-rectangle quadrature
  rep.detail_csv += "\nschedule,dt,t,gamma_quad,gamma_closed,rel_err_gamma,rel_err_gamma_inv\n";
  const std::vector<double> dts{1e-2, 5e-3, 2.5e-3, 1.25e-3, 1e-4};
  for (const auto& [name, sched] : identity_schedules()) {
    const auto spec = linear_sde(sched);
    std::vector<double> errs;
    double worst_fine = 0;
    for (double dt : dts) {
      const TimeGrid<double> grid(0.0, 1.0, static_cast<std::size_t>(std::llround(1.0 / dt)));
      const auto track = propagate_first_variation(spec, grid);
      const auto mal = malliavin_matrix(track, spec, grid);
      double worst = 0;
      for (double t : {0.25, 0.5, 1.0}) {
        const std::size_t k = grid.nearest(t);
        const double gq = mal.gamma[k](0, 0), gc = closed_form_gamma(sched, t)(0, 0);
        const double eg = relative_error(gq, gc), ei = relative_error(1.0 / gq, closed_form_gamma_inv(sched, t)(0, 0));
        worst = std::max({worst, eg, ei});
        rep.detail_csv += name + "," + num(dt) + "," + num(t) + "," + num(gq) + "," + num(gc) + "," + num(eg) + "," +
                          num(ei) + "\n";
      }
      if (dt == 1e-4) worst_fine = worst;
      else errs.push_back(worst);
    }
    const auto fit = fit_loglog(std::vector<double>(dts.begin(), dts.end() - 1), errs);
    rep.rows.push_back(at_most("gamma " + name + " rel err at dt=1e-4", worst_fine, 1e-3));
    rep.rows.push_back(at_least("gamma " + name + " order in dt", fit.slope, 0.9));
  }
  return rep;
}

VerifyReport verify_covering(const VerifyOptions& opts) {
  VerifyReport rep;
  rep.suite = "covering";
  rep.detail_csv = "case,m,max_abs_M_minus_I\n";
  auto run = [&](const std::string& label, const SdeSpec<double>& spec, double limit) {
    const TimeGrid<double> grid(0.0, 1.0, 1000);
    const auto track = propagate_first_variation(spec, grid);
    const MatrixXd mm = covering_identity_check(track, spec, grid, grid.n_steps);
    const double err = (mm - MatrixXd::Identity(spec.dim(), spec.dim())).cwiseAbs().maxCoeff();
    rep.detail_csv += label + "," + std::to_string(spec.dim()) + "," + num(err) + "\n";
    rep.rows.push_back(at_most("covering " + label, err, limit));
  };
  run("m1-vp", linear_sde(vp_schedule<double>(0.1, 0.1)), 1e-12);
  run("m1-ve", linear_sde(ve_schedule<double>(0.01, 50.0)), 1e-12);
  MatrixXd b2 = MatrixXd::Zero(2, 2);
  b2.diagonal() << -0.1, -0.2;
  run("m2-diag", SdeSpec<double>(const_linear_schedule<double>(b2, MatrixXd::Identity(2, 2))), 1e-10);
  RngStream rng(opts.seed, rng_domain::kMetrics + 0x77);
  MatrixXd q(3, 3), s(3, 3), k(3, 3);
  for (Eigen::Index i = 0; i < 9; ++i) {
    q(i) = rng.normal();
    s(i) = rng.normal();
    k(i) = rng.normal();
  }
  // stable: -(Q Q^T + I/2) plus a skew part
  const MatrixXd b3 = -(q * q.transpose() * 0.3 + 0.5 * MatrixXd::Identity(3, 3)) + 0.5 * (k - k.transpose());
  const MatrixXd s3 = s + 2.0 * MatrixXd::Identity(3, 3);
  run("m3-random", SdeSpec<double>(const_linear_schedule<double>(b3, s3)), 1e-10);
  return rep;
}

VerifyReport verify_ito_residual(const VerifyOptions& opts) {
  VerifyReport rep;
  rep.suite = "ito-residual";
  rep.detail_csv = "case,dt,rms_residual,max_residual\n";
  const std::size_t n_paths = opts.paths ? opts.paths : 1000;
  const std::vector<double> dts{1e-2, 5e-3, 2.5e-3, 1.25e-3};
  MatrixXd b = MatrixXd::Constant(1, 1, -0.05);
  const std::vector<std::pair<std::string, SdeSpec<double>>> cases{
      {"vp-beta0.1", linear_sde(vp_schedule<double>(0.1, 0.1))},
      {"vp-beta0.1-20", linear_sde(vp_schedule<double>(0.1, 20.0))},
      {"constlinear-b-0.05", SdeSpec<double>(const_linear_schedule<double>(b, MatrixXd::Identity(1, 1)))}};
  for (const auto& [name, spec] : cases) {
    std::vector<double> rms;
    for (double dt : dts) {
      const TimeGrid<double> grid(0.0, 1.0, static_cast<std::size_t>(std::llround(1.0 / dt)));
      const auto ens = simulate_forward(spec, grid, gaussian_initial(VectorXd::Zero(1), 1.0, opts.seed), n_paths,
                                        opts.seed + 1);
      const auto track = propagate_first_variation(spec, grid);
      std::vector<double> res(n_paths);
      parallel_for(n_paths, [&](std::size_t p) { res[p] = ito_identity_residual(ens, p, track).norm(); });
      double ss = 0, mx = 0;
      for (double r : res) {
        ss += r * r;
        mx = std::max(mx, r);
      }
      rms.push_back(std::sqrt(ss / static_cast<double>(n_paths)));
      rep.detail_csv += name + "," + num(dt) + "," + num(rms.back()) + "," + num(mx) + "\n";
    }
    const auto fit = fit_loglog(dts, rms);
    rep.rows.push_back(at_least(name + " rms order in dt", fit.slope, 0.9));
    rep.rows.push_back(at_most(name + " rms at dt=1.25e-3", rms.back(), 5e-2));
  }
  return rep;
}

VerifyReport verify_singularity(const VerifyOptions&) {
  VerifyReport rep;
  rep.suite = "singularity";
  rep.detail_csv = "schedule,slope,intercept,r2\n";
  const auto ts = logspace(1e-4, 1e-2, 17);
  const std::vector<std::tuple<std::string, Schedule<double>, double>> cases{
      {"ve", ve_schedule<double>(0.01, 50.0), -1.0},
      {"vp", vp_schedule<double>(0.1, 0.1), -1.0},
      {"subvp", subvp_schedule<double>(0.1, 0.1), -2.0}};
  for (const auto& [name, sched, target] : cases) {
    const auto fit = fit_singularity_slope(sched, ts);
    rep.detail_csv += name + "," + num(fit.slope) + "," + num(fit.intercept) + "," + num(fit.r2) + "\n";
    rep.rows.push_back(within(name + " slope", fit.slope, target, 0.05));
    rep.rows.push_back(at_least(name + " r2", fit.r2, 0.999));
  }
  return rep;
}

double dgamma_bump_error(const SdeSpec<double>& spec, const TimeGrid<double>& grid, const VectorXd& x0,
                         const MatrixXd& increments, std::size_t k, Eigen::Index l, double h) {
  const PathTrack base = compute_path_track(spec, grid, x0, increments);
  if (base.diverged) throw NumericError("dgamma_bump_error: path diverged");
  MatrixXd up = increments, dn = increments;
  up(l, static_cast<Eigen::Index>(k)) += h;
  dn(l, static_cast<Eigen::Index>(k)) -= h;
  const MatrixXd fd = (compute_path_track(spec, grid, x0, up).gamma - compute_path_track(spec, grid, x0, dn).gamma) /
                      (2.0 * h);
  const MatrixXd an = dgamma_malliavin(spec, grid, base, k)[static_cast<std::size_t>(l)];
  // dB of the last step never reaches gamma_T: fd is exactly zero there
  return fd.norm() == 0.0 ? (an - fd).norm() : (an - fd).norm() / fd.norm();
}

VerifyReport verify_nonlinear(const VerifyOptions& opts) {
  VerifyReport rep;
  rep.suite = "nonlinear";
  MatrixXd a2(2, 2), s2(2, 2);
  a2 << -0.3, 0.4, -0.2, 0.1;
  s2 << 1.0, 0.3, 0.0, 1.0;
  const SdeSpec<double> cubic1 = cubic_sde<double>(1.0, 1.0, 1);
  const SdeSpec<double> cubic2(const_linear_schedule<double>(a2, s2, 1.0), 1.0);

  // fast engine against the direct double sum
  rep.detail_csv = "case,path,delta_fast,delta_reference,rel_diff\n";
  double worst = 0;
  for (const auto* spec : {&cubic1, &cubic2}) {
    const TimeGrid<double> grid(0.0, 1.0, 200);
    const BrownianStore store(opts.seed, spec->noise_dim(), grid);
    for (std::size_t p = 0; p < 3; ++p) {
      const VectorXd x0 = VectorXd::Constant(spec->dim(), 0.3);
      const MatrixXd dw = store.increments(p);
      const auto fast = skorokhod_nonlinear(*spec, grid, x0, dw, p);
      const auto ref = skorokhod_reference(*spec, grid, compute_path_track(*spec, grid, x0, dw), dw);
      const double e = (fast.delta - ref.delta).norm() / std::max(ref.delta.norm(), 1e-300);
      worst = std::max(worst, e);
      rep.detail_csv += "m" + std::to_string(spec->dim()) + "," + std::to_string(p) + "," + num(fast.delta(0)) + "," +
                        num(ref.delta(0)) + "," + num(e) + "\n";
    }
  }
  rep.rows.push_back(at_most("fast vs reference engine rel diff", worst, 1e-10));

  // D_t gamma against central differences of gamma_T
  rep.detail_csv += "\ncase,path,k,l,rel_err\n";
  double worst_bump = 0;
  std::size_t n_checks = 0;
  RngStream rng(opts.seed, rng_domain::kMetrics + 0x99);
  for (const auto* spec : {&cubic1, &cubic2}) {
    const TimeGrid<double> grid(0.0, 1.0, 1000);
    const BrownianStore store(opts.seed + 1, spec->noise_dim(), grid);
    for (std::size_t c = 0; c < 12; ++c) {
      const std::size_t p = rng.index(1000);
      const std::size_t k = rng.index(grid.n_steps);
      const auto l = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(spec->noise_dim())));
      const double e = dgamma_bump_error(*spec, grid, VectorXd::Constant(spec->dim(), 0.3), store.increments(p), k, l, 1e-3);
      worst_bump = std::max(worst_bump, e);
      ++n_checks;
      rep.detail_csv += "m" + std::to_string(spec->dim()) + "," + std::to_string(p) + "," + std::to_string(k) + "," +
                        std::to_string(l) + "," + num(e) + "\n";
    }
  }
  rep.rows.push_back(at_least("bump checks", static_cast<double>(n_checks), 20));
  rep.rows.push_back(at_most("D_t gamma bump max rel err", worst_bump, 5e-2));

  // cubic stationary law at reduced scale: score -2 y^3
  const std::size_t n_paths = opts.paths ? opts.paths : 20000;
  const auto stat = cubic_sde<double>(1.0, 6.0, 1);
  const auto ens = simulate_skorokhod(stat, TimeGrid<double>::with_step(6.0, 1e-3), point_mass(VectorXd::Zero(1)),
                                      n_paths, opts.seed + 2);
  rep.detail_csv += "\ny,estimate,standard_error,target,ess\n";
  ConditionalEstimator est;
  est.seed = opts.seed;
  for (double y : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const auto r = conditional_score(ens.samples, scalar(y), est);
    const double target = -2.0 * y * y * y + 0.0;  // no negative zero in the CSV
    const double tol = y == 0.0 ? 3.0 * r.standard_error(0) : std::max(0.15, 3.0 * r.standard_error(0));
    rep.detail_csv += num(y) + "," + num(r.score(0)) + "," + num(r.standard_error(0)) + "," + num(target) + "," +
                      num(r.ess) + "\n";
    rep.rows.push_back(within("stationary score y=" + num(y), r.score(0), target, tol));
  }
  return rep;
}

std::vector<std::string> suite_names() { return {"linear-equivalence", "covering", "ito-residual", "singularity", "nonlinear"}; }

VerifyReport run_suite(const std::string& name, const VerifyOptions& opts) {
  if (name == "linear-equivalence") return verify_linear_equivalence(opts);
  if (name == "covering") return verify_covering(opts);
  if (name == "ito-residual") return verify_ito_residual(opts);
  if (name == "singularity") return verify_singularity(opts);
  if (name == "nonlinear") return verify_nonlinear(opts);
  throw std::invalid_argument("unknown verify suite '" + name + "'");
}

}  // namespace mbs
