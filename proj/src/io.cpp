#include "mbscore/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mbs {

using nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string paths_csv(const PathEnsemble& ens, std::size_t max_paths) {
  const Eigen::Index m = ens.dim();
  std::string s = "path,step,t";
  for (Eigen::Index i = 0; i < m; ++i) s += ",x_" + std::to_string(i);
  s += "\n";
  const std::size_t np = std::min(max_paths, ens.n_paths());
  for (std::size_t p = 0; p < np; ++p)
    for (std::size_t k = 0; k < ens.grid.size(); ++k) {
      s += std::to_string(p) + "," + std::to_string(k) + "," + fmt(ens.grid.node(k));
      for (Eigen::Index i = 0; i < m; ++i) s += "," + fmt(ens.states[p](i, static_cast<Eigen::Index>(k)));
      s += "\n";
    }
  return s;
}

std::string gamma_csv(const std::vector<MatrixXd>& gamma, const TimeGrid<double>& grid) {
  if (gamma.size() != grid.size()) throw std::invalid_argument("gamma_csv: one matrix per node required");
  const Eigen::Index m = gamma.front().rows();
  std::string s = "step,t";
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) s += ",gamma_" + std::to_string(i) + std::to_string(j);
  s += "\n";
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    s += std::to_string(k) + "," + fmt(grid.node(k));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) s += "," + fmt(gamma[k](i, j));
    s += "\n";
  }
  return s;
}

std::string points_csv(const MatrixXd& points) {
  std::string s;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += (i ? ",x_" : "x_") + std::to_string(i);
  s += "\n";
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) s += (i ? "," : "") + fmt(points(i, j));
    s += "\n";
  }
  return s;
}

MatrixXd read_points_csv(const std::string& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  const auto m = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  std::vector<double> vals;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    Eigen::Index c = 0;
    while (std::getline(ls, cell, ',')) {
      vals.push_back(std::stod(cell));
      ++c;
    }
    if (c != m) throw std::runtime_error(path + ": ragged row " + std::to_string(rows + 2));
    ++rows;
  }
  MatrixXd out(m, static_cast<Eigen::Index>(rows));
  for (std::size_t j = 0; j < rows; ++j)
    for (Eigen::Index i = 0; i < m; ++i) out(i, static_cast<Eigen::Index>(j)) = vals[j * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)];
  return out;
}

std::string skorokhod_csv(const std::vector<SkorokhodSample>& samples) {
  if (samples.empty()) return "path\n";
  const Eigen::Index m = samples.front().x_terminal.size();
  std::string s = "path";
  for (Eigen::Index i = 0; i < m; ++i) s += ",xT_" + std::to_string(i);
  for (Eigen::Index i = 0; i < m; ++i) s += ",delta_" + std::to_string(i + 1);
  if (m == 1) {
    s += ",ito_term,correction_term";
  } else {
    for (Eigen::Index i = 0; i < m; ++i) s += ",ito_term_" + std::to_string(i + 1);
    for (Eigen::Index i = 0; i < m; ++i) s += ",correction_term_" + std::to_string(i + 1);
  }
  s += "\n";
  for (const auto& x : samples) {
    s += std::to_string(x.path);
    for (Eigen::Index i = 0; i < m; ++i) s += "," + fmt(x.x_terminal(i));
    for (Eigen::Index i = 0; i < m; ++i) s += "," + fmt(x.delta(i));
    for (Eigen::Index i = 0; i < m; ++i) s += "," + fmt(x.ito(i));
    for (Eigen::Index i = 0; i < m; ++i) s += "," + fmt(x.correction(i));
    s += "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Config

Schedule<double> ExperimentConfig::make_schedule() const {
  ScheduleParams<double> p;
  p.dim = dim;
  p.horizon = horizon;
  p.sigma_min = sigma_min;
  p.sigma_max = sigma_max;
  p.beta_min = beta_min;
  p.beta_max = beta_max;
  if (schedule == ScheduleKind::ConstLinear || schedule == ScheduleKind::Custom)
    throw ConfigError("config: schedule must be ve, vp or subvp");
  return mbs::make_schedule(schedule, p);
}

TimeGrid<double> ExperimentConfig::make_grid() const {
  if (integer_steps) return TimeGrid<double>::integer(n_steps);
  return TimeGrid<double>(0.0, horizon, n_steps);
}

namespace {

// Reads keys from a JSON object and rejects any key that was not consumed.
class Strict {
 public:
  Strict(const ordered_json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError("config: '" + where_ + "' must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config: bad value for '" + where_ + "." + key + "': " + e.what());
    }
  }
  const ordered_json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + where_ + "." + k + "'");
  }

 private:
  const ordered_json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Strict top(j, "");
  int version = -1;
  top.get("schema_version", version);
  if (version != kConfigSchemaVersion)
    throw ConfigError("config: schema_version must be " + std::to_string(kConfigSchemaVersion));
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  if (auto* s = top.sub("schedule")) {
    Strict q(*s, "schedule");
    std::string kind = std::string(to_string(c.schedule));
    q.get("kind", kind);
    try {
      c.schedule = parse_schedule_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    q.get("dim", c.dim);
    q.get("horizon", c.horizon);
    q.get("sigma_min", c.sigma_min);
    q.get("sigma_max", c.sigma_max);
    q.get("beta_min", c.beta_min);
    q.get("beta_max", c.beta_max);
    q.finish();
  }
  if (auto* s = top.sub("grid")) {
    Strict q(*s, "grid");
    q.get("n_steps", c.n_steps);
    q.get("integer_steps", c.integer_steps);
    q.finish();
  }
  if (auto* s = top.sub("dataset")) {
    Strict q(*s, "dataset");
    std::string kind = std::string(to_string(c.dataset.kind));
    q.get("kind", kind);
    try {
      c.dataset.kind = parse_dataset_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    q.get("n_points", c.dataset.n_points);
    q.get("seed", c.dataset.seed);
    q.get("gmm_radius", c.dataset.gmm_radius);
    q.get("gmm_std", c.dataset.gmm_std);
    q.get("swiss_noise", c.dataset.swiss_noise);
    q.get("swiss_extent", c.dataset.swiss_extent);
    q.get("checker_extent", c.dataset.checker_extent);
    q.get("n_paths", c.n_paths);
    q.finish();
  }
  if (auto* s = top.sub("training")) {
    Strict q(*s, "training");
    q.get("hidden", c.hidden);
    q.get("epochs", c.training.epochs);
    q.get("batch_size", c.training.batch_size);
    q.get("batches_per_epoch", c.training.batches_per_epoch);
    q.get("learning_rate", c.training.learning_rate);
    q.get("weight_decay", c.training.weight_decay);
    q.get("beta1", c.training.beta1);
    q.get("beta2", c.training.beta2);
    q.get("adam_eps", c.training.adam_eps);
    q.get("val_fraction", c.val_fraction);
    std::string param = c.residual_output ? "residual" : "direct";
    q.get("output_parametrization", param);
    if (param != "residual" && param != "direct")
      throw ConfigError("config: training.output_parametrization must be 'residual' or 'direct'");
    c.residual_output = param == "residual";
    q.finish();
  }
  if (auto* s = top.sub("sampler")) {
    Strict q(*s, "sampler");
    q.get("steps", c.sampler_steps);
    q.get("n_samples", c.n_samples);
    q.finish();
  }
  if (auto* s = top.sub("metrics")) {
    Strict q(*s, "metrics");
    q.get("n_projections", c.metrics.n_projections);
    q.get("mmd_bandwidth", c.metrics.mmd_bandwidth);
    q.finish();
  }
  top.finish();
  if (c.dim < 1 || c.n_steps < 1 || c.sampler_steps < 1 || c.n_samples < 1 || c.n_paths < 1)
    throw ConfigError("config: dimensions, step counts and sizes must be >= 1");
  try {
    c.training.validate();
    (void)c.make_schedule();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.training.seed = c.seed;
  c.metrics.seed = c.seed;
  return c;
}

std::string to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["schedule"] = {{"kind", std::string(to_string(c.schedule))},
                   {"dim", c.dim},
                   {"horizon", c.horizon},
                   {"sigma_min", c.sigma_min},
                   {"sigma_max", c.sigma_max},
                   {"beta_min", c.beta_min},
                   {"beta_max", c.beta_max}};
  j["grid"] = {{"n_steps", c.n_steps}, {"integer_steps", c.integer_steps}};
  j["dataset"] = {{"kind", std::string(to_string(c.dataset.kind))},
                  {"n_points", c.dataset.n_points},
                  {"seed", c.dataset.seed},
                  {"gmm_radius", c.dataset.gmm_radius},
                  {"gmm_std", c.dataset.gmm_std},
                  {"swiss_noise", c.dataset.swiss_noise},
                  {"swiss_extent", c.dataset.swiss_extent},
                  {"checker_extent", c.dataset.checker_extent},
                  {"n_paths", c.n_paths}};
  j["training"] = {{"hidden", c.hidden},
                   {"epochs", c.training.epochs},
                   {"batch_size", c.training.batch_size},
                   {"batches_per_epoch", c.training.batches_per_epoch},
                   {"learning_rate", c.training.learning_rate},
                   {"weight_decay", c.training.weight_decay},
                   {"beta1", c.training.beta1},
                   {"beta2", c.training.beta2},
                   {"adam_eps", c.training.adam_eps},
                   {"val_fraction", c.val_fraction},
                   {"output_parametrization", c.residual_output ? "residual" : "direct"}};
  j["sampler"] = {{"steps", c.sampler_steps}, {"n_samples", c.n_samples}};
  j["metrics"] = {{"n_projections", c.metrics.n_projections}, {"mmd_bandwidth", c.metrics.mmd_bandwidth}};
  return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a(to_json(config)); }

void write_manifest(const std::string& dir, const std::string& command, const ExperimentConfig& config,
                    const std::vector<std::string>& files) {
  ordered_json j;
  char hash[20];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(config_hash(config)));
  j["command"] = command;
  j["config_hash"] = hash;
  j["config"] = ordered_json::parse(to_json(config));
  ordered_json fl = ordered_json::array();
  for (const auto& f : files) {
    const auto p = std::filesystem::path(dir) / f;
    fl.push_back({{"file", f}, {"bytes", std::filesystem::exists(p) ? std::filesystem::file_size(p) : 0}});
  }
  j["files"] = fl;
  write_text((std::filesystem::path(dir) / "manifest.json").string(), j.dump(2) + "\n");
}

}  // namespace mbs
