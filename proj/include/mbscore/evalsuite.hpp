#pragma once

#include "mbscore/linear_score.hpp"

#include <string>

namespace mbs {

enum class DatasetKind { Checkerboard, SwissRoll, Gmm8 };

std::string_view to_string(DatasetKind k);
DatasetKind parse_dataset_kind(std::string_view s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Gmm8;
  std::size_t n_points = 8000;
  std::uint64_t seed = 0;
  double gmm_radius = 1.0;
  double gmm_std = 0.1;          // 1.0 gives the wide-mode variant
  double swiss_noise = 0.05;
  double swiss_extent = 2.0;     // rescaled into [-extent, extent]^2
  double checker_extent = 2.0;   // 4 x 4 cells over [-extent, extent]^2
};

/// 2 x n points, deterministic per seed.
MatrixXd generate_dataset(const DatasetSpec& spec);

/// Component means of the Gmm8 dataset, as columns.
MatrixXd gmm8_means(double radius = 1.0);

/// Median pairwise Euclidean distance of the union of X and Y (columns),
/// floored at 1e-6. At most `max_points` columns enter, taken with a fixed stride.
double median_bandwidth(const MatrixXd& x, const MatrixXd& y, std::size_t max_points = 2000);

/// Squared MMD, biased V-statistic with kernel exp(-|a - b|^2 / (2 h^2)).
/// h <= 0 selects median_bandwidth.
double mmd(const MatrixXd& x, const MatrixXd& y, double bandwidth = 0);

struct PermutationTest {
  double statistic = 0;
  double quantile95 = 0;
  double p_value = 1;
};

/// Permutation null of mmd at a fixed bandwidth.
PermutationTest mmd_permutation_test(const MatrixXd& x, const MatrixXd& y, std::size_t n_shuffles,
                                     std::uint64_t seed, double bandwidth = 0);

/// Mean over directions of the exact 1D Wasserstein-1 distance between the
/// projected samples. Unequal sizes are aligned on a common quantile grid.
double sliced_wasserstein(const MatrixXd& x, const MatrixXd& y, std::size_t n_projections, std::uint64_t seed);
double sliced_wasserstein(const MatrixXd& x, const MatrixXd& y, const MatrixXd& directions);
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

/// Number of modes holding at least `min_fraction` of the samples within
/// `radius` of their mean.
std::size_t mode_coverage(const MatrixXd& samples, const MatrixXd& means, double radius, double min_fraction = 0.02);

struct MetricsConfig {
  std::size_t n_projections = 64;
  std::uint64_t seed = 0;
  double mmd_bandwidth = 0;  // <= 0: median heuristic on (samples, truth)
  double prior_std = 1.0;    // baseline draws N(0, prior_std^2 I)
  bool gmm8 = false;
  double gmm_std = 0.1;
  double gmm_radius = 1.0;
};

struct MetricsReport {
  double mmd = 0;
  double mmd_bandwidth = 0;
  double mmd_prior = 0;  // baseline: prior draws vs truth, same bandwidth
  double sliced_wasserstein = 0;
  std::size_t n_projections = 0;
  std::optional<std::size_t> mode_coverage;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;
  std::size_t n_truth = 0;

  std::string to_json(const MetricsConfig& config) const;
  std::string to_csv() const;
};

MetricsReport assemble_report(const MatrixXd& samples, const MatrixXd& truth, const MetricsConfig& config);

}  // namespace mbs
