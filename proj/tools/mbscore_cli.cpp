// mbscore: simulate -> train -> sample pipeline plus score checks and the
// verification suites. Exit codes: 0 ok, 1 usage/config/I/O, 2 verification
// failure, 3 numeric failure.

#include "mbscore/io.hpp"
#include "mbscore/sampler.hpp"
#include "mbscore/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace mbs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;
};

void log_line(const std::string& msg) { std::cerr << "[mbscore] " << msg << "\n"; }

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory (overrides the config)");
  sub->add_option("--threads", c.threads, "worker cap; 1 gives bitwise reproducibility")->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve(CLI::App* sub, const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (sub->count("--seed")) {
    cfg.seed = c.seed;
    cfg.training.seed = c.seed;
    cfg.metrics.seed = c.seed;
  }
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.threads) set_default_threads(c.threads);
  return cfg;
}

std::string in_dir(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

InitialSampler dataset_sampler(const ExperimentConfig& cfg) {
  DatasetSpec ds = cfg.dataset;
  if (cfg.dim != 2) throw ConfigError("config: datasets are 2-D; set schedule.dim = 2");
  return dataset_initial(std::make_shared<const MatrixXd>(generate_dataset(ds)));
}

MatrixXd reference_points(const ExperimentConfig& cfg, std::size_t n) {
  DatasetSpec ds = cfg.dataset;
  ds.seed = cfg.dataset.seed + 1;  // held out from the training draw
  ds.n_points = n;
  return generate_dataset(ds);
}

MetricsConfig metrics_config(const ExperimentConfig& cfg, double prior_std) {
  MetricsConfig mc = cfg.metrics;
  mc.prior_std = prior_std;
  mc.gmm8 = cfg.dataset.kind == DatasetKind::Gmm8;
  mc.gmm_std = cfg.dataset.gmm_std;
  mc.gmm_radius = cfg.dataset.gmm_radius;
  return mc;
}

GaussianMixturePrior<double> dataset_prior(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind != DatasetKind::Gmm8)
    throw ConfigError("the oracle field needs a closed-form prior; use dataset.kind = gmm8");
  const MatrixXd means = gmm8_means(cfg.dataset.gmm_radius);
  std::vector<VectorXd> mu;
  for (Eigen::Index j = 0; j < means.cols(); ++j) mu.push_back(means.col(j));
  return GaussianMixturePrior<double>::isotropic(std::move(mu), cfg.dataset.gmm_std);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const ExperimentConfig& cfg, std::size_t max_paths) {
  const SdeSpec<double> spec = linear_sde(cfg.make_schedule());
  const TimeGrid<double> grid = cfg.make_grid();
  log_line("simulate: " + std::to_string(cfg.n_paths) + " paths, " + std::to_string(grid.n_steps) + " steps");
  const auto ens = simulate_forward(spec, grid, dataset_sampler(cfg), cfg.n_paths, cfg.seed);
  const auto track = propagate_first_variation(spec, grid);
  const auto mal = malliavin_matrix(track, spec, grid);
  MatrixXd ends(spec.dim(), static_cast<Eigen::Index>(ens.n_paths()));
  for (std::size_t p = 0; p < ens.n_paths(); ++p) ends.col(static_cast<Eigen::Index>(p)) = ens.states[p].col(grid.n_steps);
  write_text(in_dir(cfg, "paths.csv"), paths_csv(ens, max_paths));
  write_text(in_dir(cfg, "gamma.csv"), gamma_csv(mal.gamma, grid));
  write_text(in_dir(cfg, "endpoints.csv"), points_csv(ends));
  write_manifest(cfg.output_dir, "simulate", cfg, {"paths.csv", "gamma.csv", "endpoints.csv"});
  return kExitOk;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& resume) {
  const Schedule<double> sched = cfg.make_schedule();
  const SdeSpec<double> spec = linear_sde(sched);
  const TimeGrid<double> grid = cfg.make_grid();
  log_line("train: simulating " + std::to_string(cfg.n_paths) + " paths");
  const auto ens = simulate_forward(spec, grid, dataset_sampler(cfg), cfg.n_paths, cfg.seed);
  const TrainingSet data = build_training_set(ens, cfg.val_fraction, cfg.seed);
  MlpModel model = resume.empty() ? MlpModel::create(spec.dim() + 1, cfg.hidden, spec.dim(), cfg.seed)
                                  : load_checkpoint(resume);
  if (model.input_dim() != spec.dim() + 1 || model.output_dim() != spec.dim())
    throw ConfigError("checkpoint dimensions do not match the config");
  if (resume.empty() && cfg.residual_output) model.residual = sched;
  log_line("train: " + std::to_string(data.size()) + " examples, " + std::to_string(model.n_parameters()) +
           " parameters");
  const TrainResult res = train(model, data, cfg.training);
  std::string loss = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < res.train_loss.size(); ++e)
    loss += std::to_string(e) + "," + fmt(res.train_loss[e]) + "," +
            (e < res.val_loss.size() ? fmt(res.val_loss[e]) : std::string()) + "\n";
  write_text(in_dir(cfg, "loss.csv"), loss);
  save_checkpoint(model, in_dir(cfg, "model.bin"), &cfg.training);
  log_line("train: final loss " + fmt(res.train_loss.back()));
  write_manifest(cfg.output_dir, "train", cfg, {"loss.csv", "model.bin", "model.bin.json"});
  return kExitOk;
}

struct SampleArgs {
  std::string field = "oracle";
  std::string schedule;
  std::size_t steps = 0;
  std::size_t n = 0;
  std::string file;
  std::string checkpoint;
  bool trajectories = false;
  std::size_t mc_paths = 5000;
  std::size_t mc_horizons = 10;
};

int cmd_sample(ExperimentConfig cfg, const SampleArgs& a) {
  if (!a.schedule.empty()) cfg.schedule = parse_schedule_kind(a.schedule);
  if (a.steps) cfg.sampler_steps = a.steps;
  if (a.n) cfg.n_samples = a.n;
  // --out may name the samples file itself; everything else goes next to it
  std::string samples_name = "samples.csv";
  if (!a.file.empty() && fs::path(a.file).extension() == ".csv") {
    samples_name = fs::path(a.file).filename().string();
    cfg.output_dir = fs::path(a.file).parent_path().empty() ? "." : fs::path(a.file).parent_path().string();
  }
  const Schedule<double> sched = cfg.make_schedule();
  const SdeSpec<double> spec = linear_sde(sched);
  const auto moments = std::make_shared<ClosedFormMoments>(sched);

  std::shared_ptr<const ScoreField> field;
  if (a.field == "oracle") {
    field = std::make_shared<LinearScoreField>(moments, std::make_shared<GaussianPosteriorMean>(dataset_prior(cfg)), 0.0);
  } else if (a.field == "mlp") {
    const std::string ckpt = a.checkpoint.empty() ? in_dir(cfg, "model.bin") : a.checkpoint;
    if (!fs::exists(ckpt)) throw ConfigError("missing checkpoint '" + ckpt + "'");
    auto model = std::make_shared<const MlpModel>(load_checkpoint(ckpt));
    field = std::make_shared<LinearScoreField>(moments, std::make_shared<RegressorMean>(model), 0.0);
  } else {
    const double dt = sched.horizon() / static_cast<double>(cfg.sampler_steps);
    const auto hs = logspace(dt, sched.horizon(), a.mc_horizons);
    log_line("sample: simulating Skorokhod ensembles at " + std::to_string(hs.size()) + " horizons");
    field = std::make_shared<NonlinearMcField>(spec, dt, hs, dataset_sampler(cfg), a.mc_paths, cfg.seed);
  }

  ReverseRun run;
  run.field = field;
  run.spec = spec;
  run.steps = cfg.sampler_steps;
  run.seed = cfg.seed;
  run.keep_trajectories = a.trajectories;
  log_line("sample: " + std::to_string(cfg.n_samples) + " samples, " + std::to_string(run.steps) + " steps, field " +
           a.field);
  const ReverseResult res = reverse_sample(run, cfg.n_samples);

  std::vector<std::string> files{samples_name};
  write_text(in_dir(cfg, samples_name), points_csv(res.samples));
  if (a.trajectories) {
    std::string s = "step,t,sample";
    for (Eigen::Index i = 0; i < spec.dim(); ++i) s += ",x_" + std::to_string(i);
    s += "\n";
    for (std::size_t k = 0; k < res.trajectory.size(); ++k)
      for (Eigen::Index j = 0; j < res.trajectory[k].cols(); ++j) {
        s += std::to_string(k) + "," + fmt(res.times[k]) + "," + std::to_string(j);
        for (Eigen::Index i = 0; i < spec.dim(); ++i) s += "," + fmt(res.trajectory[k](i, j));
        s += "\n";
      }
    write_text(in_dir(cfg, "trajectories.csv"), s);
    files.push_back("trajectories.csv");
  }
  if (spec.dim() == 2) {
    const MetricsConfig mc = metrics_config(cfg, run.resolved_prior_std());
    const MetricsReport rep = assemble_report(res.samples, reference_points(cfg, cfg.n_samples), mc);
    write_text(in_dir(cfg, "metrics.json"), rep.to_json(mc));
    write_text(in_dir(cfg, "metrics.csv"), rep.to_csv());
    files.insert(files.end(), {"metrics.json", "metrics.csv"});
    log_line("sample: mmd " + fmt(rep.mmd) + " (prior baseline " + fmt(rep.mmd_prior) + ")");
  }
  write_manifest(cfg.output_dir, "sample", cfg, files);
  return kExitOk;
}

struct ScoreCheckArgs {
  std::string schedule = "all";
  double x0 = 0.5;
  std::vector<double> times{0.1, 0.5, 1.0};
  double y_min = -2, y_max = 2;
  std::size_t y_n = 9;
  double tolerance = 1e-6;
};

int cmd_score_check(ExperimentConfig cfg, const ScoreCheckArgs& a) {
  std::vector<ScheduleKind> kinds;
  if (a.schedule == "all") kinds = {ScheduleKind::VE, ScheduleKind::VP, ScheduleKind::SubVP};
  else kinds = {parse_schedule_kind(a.schedule)};
  cfg.dim = 1;
  std::string csv = "schedule,t,y,score_mb,score_fp,abs_err,rel_err\n";
  double worst = 0;
  const VectorXd x0 = VectorXd::Constant(1, a.x0);
  for (ScheduleKind kind : kinds) {
    cfg.schedule = kind;
    const Schedule<double> sched = cfg.make_schedule();
    const LinearScoreField f(std::make_shared<ClosedFormMoments>(sched), std::make_shared<PointMassMean>(x0), 0.0);
    for (double t : a.times)
      for (std::size_t i = 0; i < a.y_n; ++i) {
        const double y = a.y_n == 1 ? a.y_min
                                    : a.y_min + (a.y_max - a.y_min) * static_cast<double>(i) / static_cast<double>(a.y_n - 1);
        const VectorXd yv = VectorXd::Constant(1, y);
        const double mb = f.score_at(t, yv)(0);
        const double fp = fokker_planck_score_oracle<double>(sched, t, yv, x0)(0);
        const double rel = relative_error(mb, fp);
        worst = std::max(worst, rel);
        csv += std::string(to_string(kind)) + "," + fmt(t) + "," + fmt(y) + "," + fmt(mb) + "," + fmt(fp) + "," +
               fmt(std::abs(mb - fp)) + "," + fmt(rel) + "\n";
      }
  }
  write_text(in_dir(cfg, "score_check.csv"), csv);
  write_manifest(cfg.output_dir, "score-check", cfg, {"score_check.csv"});
  const bool ok = worst <= a.tolerance;
  std::printf("%s max rel err %.3e (tolerance %.1e)\n", ok ? "PASS" : "FAIL", worst, a.tolerance);
  return ok ? kExitOk : kExitVerify;
}

struct NonlinearArgs {
  double sigma = 1.0;
  double horizon = 6.0;
  std::size_t paths = 20000;
  double bandwidth = 0;
  std::string grid = "-1.5:1.5:13";
  double dt = 1e-3;
  double x0 = 0;
};

std::vector<double> parse_grid(const std::string& s) {
  double lo = 0, hi = 0;
  unsigned long n = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lu%c", &lo, &hi, &n, &tail) != 3 || n == 0 || hi < lo)
    throw ConfigError("--grid expects lo:hi:n with lo <= hi and n >= 1");
  std::vector<double> out(n);
  for (unsigned long i = 0; i < n; ++i) out[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

int cmd_nonlinear_score(const ExperimentConfig& cfg, const NonlinearArgs& a) {
  if (!(a.sigma > 0) || !(a.horizon > 0) || !(a.dt > 0) || a.paths < 1000)
    throw ConfigError("nonlinear-score: need sigma, horizon, dt > 0 and at least 1000 paths");
  const auto ys = parse_grid(a.grid);
  const SdeSpec<double> spec = cubic_sde<double>(a.sigma, a.horizon, 1);
  const auto grid = TimeGrid<double>::with_step(a.horizon, a.dt);
  log_line("nonlinear-score: " + std::to_string(a.paths) + " paths, " + std::to_string(grid.n_steps) + " steps");
  const auto ens = simulate_skorokhod(spec, grid, point_mass(VectorXd::Constant(1, a.x0)), a.paths, cfg.seed);
  ConditionalEstimator est;
  est.seed = cfg.seed;
  if (a.bandwidth > 0) est.bandwidth = VectorXd::Constant(1, a.bandwidth);
  std::string csv = "y,score,standard_error,bandwidth,ess,low_confidence,stationary_score\n";
  for (double y : ys) {
    const auto r = conditional_score(ens.samples, VectorXd::Constant(1, y), est);
    csv += fmt(y) + "," + fmt(r.score(0)) + "," + fmt(r.standard_error(0)) + "," + fmt(r.bandwidth(0)) + "," +
           fmt(r.ess) + "," + (r.low_confidence ? "1" : "0") + "," + fmt(-2.0 * y * y * y / (a.sigma * a.sigma)) + "\n";
  }
  write_text(in_dir(cfg, "nonlinear_score.csv"), csv);
  write_text(in_dir(cfg, "skorokhod.csv"), skorokhod_csv(ens.samples));
  log_line("nonlinear-score: " + std::to_string(ens.samples.size()) + " valid samples, " +
           std::to_string(ens.n_flagged) + " flagged, " + std::to_string(ens.n_diverged) + " diverged");
  write_manifest(cfg.output_dir, "nonlinear-score", cfg, {"nonlinear_score.csv", "skorokhod.csv"});
  return kExitOk;
}

int cmd_verify(const ExperimentConfig& cfg, const std::string& suite, std::size_t paths) {
  VerifyOptions opts;
  opts.seed = cfg.seed;
  opts.paths = paths;
  const std::vector<std::string> suites = suite == "all" ? suite_names() : std::vector<std::string>{suite};
  bool ok = true;
  std::vector<std::string> files;
  for (const auto& name : suites) {
    log_line("verify: " + name);
    const VerifyReport rep = run_suite(name, opts);
    std::cout << "== " << name << "\n" << rep.table();
    write_text(in_dir(cfg, "verify_" + name + ".csv"), rep.csv());
    write_text(in_dir(cfg, "verify_" + name + "_detail.csv"), rep.detail_csv);
    files.insert(files.end(), {"verify_" + name + ".csv", "verify_" + name + "_detail.csv"});
    ok = ok && rep.passed();
  }
  write_manifest(cfg.output_dir, "verify", cfg, files);
  return ok ? kExitOk : kExitVerify;
}

int cmd_metrics(const ExperimentConfig& cfg, const std::string& samples_path, const std::string& truth_path) {
  const MatrixXd samples = read_points_csv(samples_path);
  const MatrixXd truth = truth_path.empty() ? reference_points(cfg, static_cast<std::size_t>(samples.cols()))
                                            : read_points_csv(truth_path);
  const double prior_std = cfg.schedule == ScheduleKind::VE ? cfg.sigma_max : 1.0;
  const MetricsConfig mc = metrics_config(cfg, prior_std);
  const MetricsReport rep = assemble_report(samples, truth, mc);
  write_text(in_dir(cfg, "metrics.json"), rep.to_json(mc));
  write_text(in_dir(cfg, "metrics.csv"), rep.to_csv());
  std::cout << rep.to_csv();
  write_manifest(cfg.output_dir, "metrics", cfg, {"metrics.json", "metrics.csv"});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Malliavin-Bismut score estimation, training and sampling"};
  app.require_subcommand(1);

  Common sim_c, train_c, sample_c, check_c, nl_c, verify_c, metrics_c;

  auto* sim = app.add_subcommand("simulate", "forward paths, gamma_t and endpoints for the configured schedule");
  add_common(sim, sim_c);
  std::size_t max_paths = 16;
  sim->add_option("--max-paths", max_paths, "paths written to paths.csv");

  auto* trn = app.add_subcommand("train", "fit the conditional-expectation regressor");
  add_common(trn, train_c);
  std::string resume;
  trn->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* smp = app.add_subcommand("sample", "reverse-time sampling with a score field");
  SampleArgs sa;
  smp->add_option("--config", sample_c.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  smp->add_option("--seed", sample_c.seed, "master seed (overrides the config)");
  smp->add_option("--out", sa.file, "samples CSV path, or an output directory");
  smp->add_option("--threads", sample_c.threads, "worker cap; 1 gives bitwise reproducibility");
  smp->add_option("--field", sa.field, "score field")->check(CLI::IsMember({"oracle", "mlp", "nonlinear-mc"}));
  smp->add_option("--schedule", sa.schedule, "schedule kind (overrides the config)")
      ->check(CLI::IsMember({"ve", "vp", "subvp", "VE", "VP", "SubVP"}));
  smp->add_option("--steps", sa.steps, "reverse steps (overrides the config)");
  smp->add_option("--n", sa.n, "number of samples (overrides the config)");
  smp->add_option("--checkpoint", sa.checkpoint, "regressor checkpoint for --field mlp");
  smp->add_flag("--trajectories", sa.trajectories, "also write every reverse step");
  smp->add_option("--mc-paths", sa.mc_paths, "paths per horizon for --field nonlinear-mc");
  smp->add_option("--mc-horizons", sa.mc_horizons, "horizons for --field nonlinear-mc");

  auto* chk = app.add_subcommand("score-check", "closed-form linear score against the transition-density score");
  add_common(chk, check_c);
  ScoreCheckArgs ca;
  chk->add_option("--schedule", ca.schedule, "ve, vp, subvp or all")
      ->check(CLI::IsMember({"all", "ve", "vp", "subvp", "VE", "VP", "SubVP"}));
  chk->add_option("--x0", ca.x0, "initial point");
  chk->add_option("--t", ca.times, "query times")->delimiter(',');
  chk->add_option("--y-min", ca.y_min, "lowest query point");
  chk->add_option("--y-max", ca.y_max, "highest query point");
  chk->add_option("--y-n", ca.y_n, "number of query points")->check(CLI::PositiveNumber);
  chk->add_option("--tolerance", ca.tolerance, "max relative error for exit code 0");

  auto* nl = app.add_subcommand("nonlinear-score", "Skorokhod score estimate for dX = -X^3 dt + sigma dW");
  add_common(nl, nl_c);
  NonlinearArgs na;
  nl->add_option("--sigma", na.sigma, "diffusion coefficient");
  nl->add_option("--horizon", na.horizon, "terminal time T");
  nl->add_option("--paths", na.paths, "Monte Carlo paths (>= 1000)");
  nl->add_option("--bandwidth", na.bandwidth, "kernel bandwidth; 0 selects Silverman's rule");
  nl->add_option("--grid", na.grid, "query points lo:hi:n");
  nl->add_option("--dt", na.dt, "Euler step");
  nl->add_option("--x0", na.x0, "initial point");

  auto* ver = app.add_subcommand("verify", "run a verification suite and print its pass/fail table");
  add_common(ver, verify_c);
  std::string suite;
  std::size_t verify_paths = 0;
  std::vector<std::string> choices = suite_names();
  choices.push_back("all");
  ver->add_option("suite", suite, "suite name")->required()->check(CLI::IsMember(choices));
  ver->add_option("--paths", verify_paths, "Monte Carlo paths (0: suite default)");

  auto* met = app.add_subcommand("metrics", "MMD, sliced Wasserstein and mode coverage of a samples CSV");
  add_common(met, metrics_c);
  std::string samples_path, truth_path;
  met->add_option("--samples", samples_path, "samples CSV")->required()->check(CLI::ExistingFile);
  met->add_option("--truth", truth_path, "reference CSV (default: fresh dataset draw)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(resolve(sim, sim_c), max_paths);
    if (*trn) return cmd_train(resolve(trn, train_c), resume);
    if (*smp) {
      if (!sa.file.empty() && fs::path(sa.file).extension() != ".csv") sample_c.out = sa.file;
      return cmd_sample(resolve(smp, sample_c), sa);
    }
    if (*chk) return cmd_score_check(resolve(chk, check_c), ca);
    if (*nl) return cmd_nonlinear_score(resolve(nl, nl_c), na);
    if (*ver) return cmd_verify(resolve(ver, verify_c), suite, verify_paths);
    if (*met) return cmd_metrics(resolve(met, metrics_c), samples_path, truth_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
