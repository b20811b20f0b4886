#pragma once

#include "mbscore/nonlinear_score.hpp"
#include "mbscore/regressor.hpp"
#include "mbscore/evalsuite.hpp"

#include <map>
#include <string>

namespace mbs {

/// Shortest round-trip decimal (17 significant digits).
std::string fmt(double v);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

/// `path,step,t,x_0..x_{m-1}` for the first `max_paths` paths.
std::string paths_csv(const PathEnsemble& ens, std::size_t max_paths);
/// `step,t,gamma_ij...` row-major, one row per grid node.
std::string gamma_csv(const std::vector<MatrixXd>& gamma, const TimeGrid<double>& grid);
/// One row per column of `points`, header `x_0..x_{m-1}`.
std::string points_csv(const MatrixXd& points);
/// Inverse of points_csv (header required).
MatrixXd read_points_csv(const std::string& path);
/// `path,xT_0..,delta_1..,ito_term,correction_term` (vector terms get a _k suffix when m > 1).
std::string skorokhod_csv(const std::vector<SkorokhodSample>& samples);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kConfigSchemaVersion = 1;

/// Full experiment description. Unknown keys are rejected when parsing.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  // schedule
  ScheduleKind schedule = ScheduleKind::VP;
  Eigen::Index dim = 2;
  double horizon = 1.0;
  double sigma_min = 0.01;
  double sigma_max = 50.0;
  double beta_min = 0.1;
  double beta_max = 20.0;

  // grid
  std::size_t n_steps = 500;
  bool integer_steps = false;

  // dataset / initial law
  DatasetSpec dataset;
  std::size_t n_paths = 8000;

  // regressor
  std::vector<Eigen::Index> hidden = std::vector<Eigen::Index>(6, 256);
  TrainConfig training;
  double val_fraction = 0.1;
  bool residual_output = true;  // "output_parametrization": "residual" | "direct"

  // sampler
  std::size_t sampler_steps = 500;
  std::size_t n_samples = 4000;

  // metrics
  MetricsConfig metrics;

  Schedule<double> make_schedule() const;
  TimeGrid<double> make_grid() const;
};

ExperimentConfig parse_config(const std::string& json_text);
std::string to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

std::uint64_t fnv1a(const std::string& bytes);
/// Hash of the canonical serialization.
std::uint64_t config_hash(const ExperimentConfig& config);

/// `manifest.json` in `dir`: command, config hash, echoed config and the
/// files written, with their sizes.
void write_manifest(const std::string& dir, const std::string& command, const ExperimentConfig& config,
                    const std::vector<std::string>& files);

}  // namespace mbs
