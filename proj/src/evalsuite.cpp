#include "mbscore/evalsuite.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "json.hpp"

namespace mbs {

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Checkerboard: return "checkerboard";
    case DatasetKind::SwissRoll: return "swissroll";
    case DatasetKind::Gmm8: return "gmm8";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view s) {
  if (s == "checkerboard") return DatasetKind::Checkerboard;
  if (s == "swissroll" || s == "swiss-roll") return DatasetKind::SwissRoll;
  if (s == "gmm8") return DatasetKind::Gmm8;
  throw std::invalid_argument("unknown dataset '" + std::string(s) + "'");
}

MatrixXd gmm8_means(double radius) {
  MatrixXd mu(2, 8);
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 8.0;
    mu(0, i) = radius * std::cos(a);
    mu(1, i) = radius * std::sin(a);
  }
  return mu;
}

MatrixXd generate_dataset(const DatasetSpec& spec) {
  if (spec.n_points < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
  const auto n = static_cast<Eigen::Index>(spec.n_points);
  MatrixXd out(2, n);
  switch (spec.kind) {
    case DatasetKind::Gmm8: {
      if (!(spec.gmm_std > 0)) throw std::invalid_argument("generate_dataset: gmm std must be > 0");
      const MatrixXd mu = gmm8_means(spec.gmm_radius);
      for (Eigen::Index j = 0; j < n; ++j) {
        RngStream rng(spec.seed, rng_domain::kDataset + static_cast<std::uint64_t>(j));
        const auto c = static_cast<Eigen::Index>(rng.index(8));
        const double z0 = rng.normal(), z1 = rng.normal();
        out(0, j) = mu(0, c) + spec.gmm_std * z0;
        out(1, j) = mu(1, c) + spec.gmm_std * z1;
      }
      break;
    }
    case DatasetKind::Checkerboard: {
      // 4 x 4 cells; a cell is active when (column + row) is even.
      const double e = spec.checker_extent;
      const double cell = 2.0 * e / 4.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        RngStream rng(spec.seed, rng_domain::kDataset + static_cast<std::uint64_t>(j));
        for (;;) {
          const double x = -e + 2.0 * e * rng.uniform();
          const double y = -e + 2.0 * e * rng.uniform();
          const int cx = std::min(3, static_cast<int>((x + e) / cell));
          const int cy = std::min(3, static_cast<int>((y + e) / cell));
          if ((cx + cy) % 2 == 0) {
            out(0, j) = x;
            out(1, j) = y;
            break;
          }
        }
      }
      break;
    }
    case DatasetKind::SwissRoll: {
      // r = theta on theta in [1.5 pi, 4.5 pi]; max radius 4.5 pi maps to extent.
      const double lo = 1.5 * std::numbers::pi, hi = 4.5 * std::numbers::pi;
      const double scale = spec.swiss_extent / hi;
      for (Eigen::Index j = 0; j < n; ++j) {
        RngStream rng(spec.seed, rng_domain::kDataset + static_cast<std::uint64_t>(j));
        const double th = lo + (hi - lo) * rng.uniform();
        const double z0 = rng.normal(), z1 = rng.normal();
        out(0, j) = scale * th * std::cos(th) + spec.swiss_noise * z0;
        out(1, j) = scale * th * std::sin(th) + spec.swiss_noise * z1;
      }
      break;
    }
  }
  return out;
}

double median_bandwidth(const MatrixXd& x, const MatrixXd& y, std::size_t max_points) {
  const Eigen::Index nx = x.cols(), ny = y.cols(), total = nx + ny;
  const Eigen::Index keep = std::min<Eigen::Index>(total, static_cast<Eigen::Index>(std::max<std::size_t>(2, max_points)));
  MatrixXd u(x.rows(), keep);
  for (Eigen::Index j = 0; j < keep; ++j) {
    const Eigen::Index src = j * total / keep;
    u.col(j) = src < nx ? x.col(src) : y.col(src - nx);
  }
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(keep * (keep - 1) / 2));
  for (Eigen::Index i = 0; i < keep; ++i)
    for (Eigen::Index j = i + 1; j < keep; ++j) d.push_back((u.col(i) - u.col(j)).norm());
  if (d.empty()) return 1e-6;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return std::max(*mid, 1e-6);
}

namespace {

// Mean of k(a_i, b_j) over all pairs; rows of the sum are split into blocks
// whose partial sums are combined in a fixed order.
double kernel_mean(const MatrixXd& a, const MatrixXd& b, double inv2h2) {
  const Eigen::Index na = a.cols(), nb = b.cols();
  const VectorXd a2 = a.colwise().squaredNorm().transpose();
  const VectorXd b2 = b.colwise().squaredNorm().transpose();
  constexpr Eigen::Index kRows = 256;
  const auto n_blocks = static_cast<std::size_t>((na + kRows - 1) / kRows);
  std::vector<double> partial(n_blocks, 0.0);
  parallel_for(n_blocks, [&](std::size_t blk) {
    const Eigen::Index lo = static_cast<Eigen::Index>(blk) * kRows;
    const Eigen::Index cnt = std::min(kRows, na - lo);
    MatrixXd g = a.middleCols(lo, cnt).transpose() * b;  // cnt x nb
    g = ((-2.0 * g).colwise() + a2.segment(lo, cnt)).rowwise() + b2.transpose();
    partial[blk] = (-(g.array().max(0.0)) * inv2h2).exp().sum();
  });
  double s = 0;
  for (double p : partial) s += p;
  return s / (static_cast<double>(na) * static_cast<double>(nb));
}

}  // namespace

double mmd(const MatrixXd& x, const MatrixXd& y, double bandwidth) {
  if (x.cols() < 2 || y.cols() < 2) throw std::invalid_argument("mmd: need at least 2 points per set");
  if (x.rows() != y.rows()) throw std::invalid_argument("mmd: dimension mismatch");
  const double h = bandwidth > 0 ? bandwidth : median_bandwidth(x, y);
  const double c = 1.0 / (2.0 * h * h);
  const double v = kernel_mean(x, x, c) + kernel_mean(y, y, c) - 2.0 * kernel_mean(x, y, c);
  return std::max(v, 0.0);
}

PermutationTest mmd_permutation_test(const MatrixXd& x, const MatrixXd& y, std::size_t n_shuffles,
                                     std::uint64_t seed, double bandwidth) {
  if (n_shuffles < 1) throw std::invalid_argument("mmd_permutation_test: n_shuffles must be >= 1");
  const double h = bandwidth > 0 ? bandwidth : median_bandwidth(x, y);
  PermutationTest out;
  out.statistic = mmd(x, y, h);
  MatrixXd pooled(x.rows(), x.cols() + y.cols());
  pooled << x, y;
  std::vector<double> null(n_shuffles);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled.cols()));
  std::size_t exceed = 0;
  for (std::size_t s = 0; s < n_shuffles; ++s) {
    std::iota(idx.begin(), idx.end(), 0);
    RngStream rng(seed, rng_domain::kMetrics + s);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    MatrixXd a(x.rows(), x.cols()), b(y.rows(), y.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) = pooled.col(idx[static_cast<std::size_t>(j)]);
    for (Eigen::Index j = 0; j < b.cols(); ++j) b.col(j) = pooled.col(idx[static_cast<std::size_t>(a.cols() + j)]);
    null[s] = mmd(a, b, h);
    if (null[s] >= out.statistic) ++exceed;
  }
  std::sort(null.begin(), null.end());
  out.quantile95 = null[std::min(null.size() - 1, static_cast<std::size_t>(std::ceil(0.95 * null.size())) - 1)];
  out.p_value = (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(n_shuffles));
  return out;
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein1_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Exact integral of |F_a^{-1}(u) - F_b^{-1}(u)| over the merged breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0, s = 0;
  while (i < a.size() && j < b.size()) {
    const double ua = static_cast<double>(i + 1) / na, ub = static_cast<double>(j + 1) / nb;
    const double next = std::min(ua, ub);
    s += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    if (ua <= next) ++i;
    if (ub <= next) ++j;
  }
  return s;
}

double sliced_wasserstein(const MatrixXd& x, const MatrixXd& y, const MatrixXd& directions) {
  if (directions.cols() < 1) throw std::invalid_argument("sliced_wasserstein: need at least one direction");
  if (x.rows() != y.rows() || directions.rows() != x.rows())
    throw std::invalid_argument("sliced_wasserstein: dimension mismatch");
  double s = 0;
  for (Eigen::Index p = 0; p < directions.cols(); ++p) {
    const VectorXd u = directions.col(p).normalized();
    const VectorXd px = x.transpose() * u, py = y.transpose() * u;
    s += wasserstein1_1d({px.data(), px.data() + px.size()}, {py.data(), py.data() + py.size()});
  }
  return s / static_cast<double>(directions.cols());
}

double sliced_wasserstein(const MatrixXd& x, const MatrixXd& y, std::size_t n_projections, std::uint64_t seed) {
  if (n_projections < 1) throw std::invalid_argument("sliced_wasserstein: n_projections must be >= 1");
  MatrixXd dirs(x.rows(), static_cast<Eigen::Index>(n_projections));
  RngStream rng(seed, rng_domain::kMetrics + 0xffffffULL);
  for (Eigen::Index p = 0; p < dirs.cols(); ++p) {
    do {
      for (Eigen::Index i = 0; i < dirs.rows(); ++i) dirs(i, p) = rng.normal();
    } while (dirs.col(p).norm() < 1e-12);
  }
  return sliced_wasserstein(x, y, dirs);
}

std::size_t mode_coverage(const MatrixXd& samples, const MatrixXd& means, double radius, double min_fraction) {
  if (samples.cols() == 0) return 0;
  std::size_t covered = 0;
  for (Eigen::Index c = 0; c < means.cols(); ++c) {
    const auto hits = ((samples.colwise() - means.col(c)).colwise().norm().array() <= radius).count();
    if (static_cast<double>(hits) >= min_fraction * static_cast<double>(samples.cols())) ++covered;
  }
  return covered;
}

MetricsReport assemble_report(const MatrixXd& samples, const MatrixXd& truth, const MetricsConfig& config) {
  MetricsReport r;
  r.seed = config.seed;
  r.n_samples = static_cast<std::size_t>(samples.cols());
  r.n_truth = static_cast<std::size_t>(truth.cols());
  r.mmd_bandwidth = config.mmd_bandwidth > 0 ? config.mmd_bandwidth : median_bandwidth(samples, truth);
  r.mmd = mmd(samples, truth, r.mmd_bandwidth);
  MatrixXd prior(samples.rows(), samples.cols());
  for (Eigen::Index j = 0; j < prior.cols(); ++j)
    for (Eigen::Index i = 0; i < prior.rows(); ++i)
      prior(i, j) = config.prior_std * CounterRng::normal(config.seed, rng_domain::kMetrics + 0x1000000ULL + j,
                                                          static_cast<std::uint64_t>(i));
  r.mmd_prior = mmd(prior, truth, r.mmd_bandwidth);
  r.n_projections = config.n_projections;
  r.sliced_wasserstein = sliced_wasserstein(samples, truth, config.n_projections, config.seed);
  if (config.gmm8) r.mode_coverage = mode_coverage(samples, gmm8_means(config.gmm_radius), 3.0 * config.gmm_std);
  return r;
}

namespace {
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string MetricsReport::to_json(const MetricsConfig& config) const {
  nlohmann::ordered_json j;
  j["mmd"] = mmd;
  j["mmd_bandwidth"] = mmd_bandwidth;
  j["mmd_prior"] = mmd_prior;
  j["sliced_wasserstein"] = sliced_wasserstein;
  j["n_projections"] = n_projections;
  if (mode_coverage) j["mode_coverage"] = *mode_coverage;
  j["seed"] = seed;
  j["n_samples"] = n_samples;
  j["n_truth"] = n_truth;
  j["config"] = {{"n_projections", config.n_projections}, {"seed", config.seed},
                 {"mmd_bandwidth", config.mmd_bandwidth}, {"prior_std", config.prior_std},
                 {"gmm8", config.gmm8},                   {"gmm_std", config.gmm_std},
                 {"gmm_radius", config.gmm_radius}};
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::string s = "metric,value\n";
  s += "mmd," + num(mmd) + "\n";
  s += "mmd_bandwidth," + num(mmd_bandwidth) + "\n";
  s += "mmd_prior," + num(mmd_prior) + "\n";
  s += "sliced_wasserstein," + num(sliced_wasserstein) + "\n";
  s += "n_projections," + std::to_string(n_projections) + "\n";
  if (mode_coverage) s += "mode_coverage," + std::to_string(*mode_coverage) + "\n";
  s += "seed," + std::to_string(seed) + "\n";
  s += "n_samples," + std::to_string(n_samples) + "\n";
  s += "n_truth," + std::to_string(n_truth) + "\n";
  return s;
}

}  // namespace mbs
