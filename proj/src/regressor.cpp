#include "mbscore/regressor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace mbs {

Normalizer Normalizer::fit(const MatrixXd& columns) {
  if (columns.cols() == 0) throw std::invalid_argument("Normalizer::fit: no data");
  Normalizer n;
  n.mean = columns.rowwise().mean();
  const double count = static_cast<double>(columns.cols());
  n.std = ((columns.colwise() - n.mean).array().square().rowwise().sum() / count).sqrt();
  for (Eigen::Index i = 0; i < n.std.size(); ++i)
    if (!(n.std(i) > 1e-12)) n.std(i) = 1.0;
  return n;
}

Normalizer Normalizer::identity(Eigen::Index n) { return {VectorXd::Zero(n), VectorXd::Ones(n)}; }

namespace {

// Vectorized: max(x, 0) + log1p(exp(-|x|)) and its derivative 1 / (1 + exp(-x)).
MatrixXd softplus(const MatrixXd& x) {
  return (x.array().max(0.0) + (-x.array().abs()).exp().log1p()).matrix();
}
MatrixXd sigmoid(const MatrixXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

struct Grads {
  std::vector<MatrixXd> W;
  std::vector<VectorXd> b;
};

// Correction parametrization in normalized target space: pred = base + coef * N,
// where base is the posterior mean of a Gaussian X_0 with the target mean and
// std, and coef the matching posterior std (both per coordinate).
void residual_terms(const MlpModel& model, const MatrixXd& z_in, MatrixXd& base, MatrixXd& coef) {
  const Eigen::Index m = model.output_dim();
  const MatrixXd raw = model.input.invert(z_in);
  base.resize(m, z_in.cols());
  coef.resize(m, z_in.cols());
  const auto& mu = model.output.mean;
  const auto& sd = model.output.std;
  for (Eigen::Index j = 0; j < z_in.cols(); ++j) {
    const double t = raw(m, j);
    const double a = model.residual->mean_factor(t);
    const double g = std::max(model.residual->closed_form_variance(t), 0.0);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double v = a * a * sd(i) * sd(i) + g;
      base(i, j) = a * sd(i) * (raw(i, j) - a * mu(i)) / v;
      coef(i, j) = std::sqrt(g / v);
    }
  }
}

// Forward with cached pre-activations, then backward; returns the loss.
double backprop(const MlpModel& model, const MatrixXd& z_in, const MatrixXd& z_target, Grads* g) {
  const std::size_t L = model.n_layers();
  std::vector<MatrixXd> act(L);   // input of layer l
  std::vector<MatrixXd> pre(L);   // pre-activation of layer l
  act[0] = z_in;
  for (std::size_t l = 0; l < L; ++l) {
    pre[l].noalias() = model.W[l] * act[l];
    pre[l].colwise() += model.b[l];
    if (l + 1 < L) act[l + 1] = softplus(pre[l]);
  }
  MatrixXd base, coef;
  if (model.residual) residual_terms(model, z_in, base, coef);
  const MatrixXd diff = model.residual ? MatrixXd(base + coef.cwiseProduct(pre[L - 1]) - z_target)
                                       : MatrixXd(pre[L - 1] - z_target);
  const double denom = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / denom;
  if (!g) return loss;
  g->W.resize(L);
  g->b.resize(L);
  MatrixXd delta = (2.0 / denom) * diff;
  if (model.residual) delta = delta.cwiseProduct(coef);
  for (std::size_t l = L; l-- > 0;) {
    g->W[l].noalias() = delta * act[l].transpose();
    g->b[l] = delta.rowwise().sum();
    if (l > 0) {
      MatrixXd back = model.W[l].transpose() * delta;
      delta = back.cwiseProduct(sigmoid(pre[l - 1]));
    }
  }
  return loss;
}

}  // namespace

MlpModel MlpModel::create(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                          std::uint64_t seed) {
  if (in < 1 || out < 1) throw std::invalid_argument("MlpModel: input and output widths must be >= 1");
  MlpModel m;
  m.widths.push_back(in);
  for (auto h : hidden) {
    if (h < 1) throw std::invalid_argument("MlpModel: hidden widths must be >= 1");
    m.widths.push_back(h);
  }
  m.widths.push_back(out);
  RngStream rng(seed, rng_domain::kTraining);
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(m.widths[l]));
    MatrixXd w(m.widths[l + 1], m.widths[l]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = scale * rng.normal();
    m.W.push_back(std::move(w));
    m.b.push_back(VectorXd::Zero(m.widths[l + 1]));
  }
  m.input = Normalizer::identity(in);
  m.output = Normalizer::identity(out);
  return m;
}

std::size_t MlpModel::n_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += static_cast<std::size_t>(W[l].size() + b[l].size());
  return n;
}

bool MlpModel::finite() const {
  for (std::size_t l = 0; l < W.size(); ++l)
    if (!W[l].allFinite() || !b[l].allFinite()) return false;
  return input.mean.allFinite() && input.std.allFinite() && output.mean.allFinite() && output.std.allFinite();
}

MatrixXd MlpModel::forward(const MatrixXd& z) const {
  MatrixXd h = z;
  for (std::size_t l = 0; l < W.size(); ++l) {
    MatrixXd p = W[l] * h;
    p.colwise() += b[l];
    h = l + 1 < W.size() ? softplus(p) : p;
  }
  return h;
}

MatrixXd MlpModel::forward_target(const MatrixXd& z) const {
  MatrixXd n = forward(z);
  if (!residual) return n;
  MatrixXd base, coef;
  residual_terms(*this, z, base, coef);
  return base + coef.cwiseProduct(n);
}

VectorXd MlpModel::parameters() const {
  VectorXd theta(static_cast<Eigen::Index>(n_parameters()));
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    theta.segment(o, W[l].size()) = W[l].reshaped();
    o += W[l].size();
    theta.segment(o, b[l].size()) = b[l];
    o += b[l].size();
  }
  return theta;
}

void MlpModel::set_parameters(const VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(n_parameters()))
    throw std::invalid_argument("MlpModel::set_parameters: size mismatch");
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l].reshaped() = theta.segment(o, W[l].size());
    o += W[l].size();
    b[l] = theta.segment(o, b[l].size());
    o += b[l].size();
  }
}

double mse_loss(const MlpModel& model, const MatrixXd& z_in, const MatrixXd& z_target, VectorXd* gradient) {
  if (z_in.rows() != model.input_dim() || z_target.rows() != model.output_dim() || z_in.cols() != z_target.cols() ||
      z_in.cols() == 0)
    throw std::invalid_argument("mse_loss: batch shape mismatch");
  if (!gradient) return backprop(model, z_in, z_target, nullptr);
  Grads g;
  const double loss = backprop(model, z_in, z_target, &g);
  gradient->resize(static_cast<Eigen::Index>(model.n_parameters()));
  Eigen::Index o = 0;
  for (std::size_t l = 0; l < g.W.size(); ++l) {
    gradient->segment(o, g.W[l].size()) = g.W[l].reshaped();
    o += g.W[l].size();
    gradient->segment(o, g.b[l].size()) = g.b[l];
    o += g.b[l].size();
  }
  return loss;
}

TrainingSet build_training_set(const PathEnsemble& ens, double val_fraction, std::uint64_t seed) {
  if (ens.n_paths() == 0 || ens.grid.n_steps == 0) throw std::invalid_argument("build_training_set: empty ensemble");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("build_training_set: val_fraction in [0,1)");
  std::vector<std::size_t> paths;
  for (std::size_t i = 0; i < ens.n_paths(); ++i)
    if (!ens.diverged[i]) paths.push_back(i);
  if (paths.empty()) throw std::invalid_argument("build_training_set: every path diverged");
  // Fisher-Yates on the counter stream keeps the split platform independent.
  RngStream rng(seed, rng_domain::kDataset);
  for (std::size_t i = paths.size(); i > 1; --i) std::swap(paths[i - 1], paths[rng.index(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(paths.size())));
  const std::size_t n_train = paths.size() - n_val;
  const std::size_t per = ens.grid.n_steps;
  const Eigen::Index m = ens.dim();

  auto fill = [&](std::size_t lo, std::size_t hi, MatrixXd& in, MatrixXd& tg) {
    in.resize(m + 1, static_cast<Eigen::Index>((hi - lo) * per));
    tg.resize(m, in.cols());
    Eigen::Index c = 0;
    for (std::size_t p = lo; p < hi; ++p) {
      const MatrixXd& st = ens.states[paths[p]];
      for (std::size_t k = 1; k <= per; ++k, ++c) {
        in.col(c).head(m) = st.col(static_cast<Eigen::Index>(k));
        in(m, c) = ens.grid.node(k);
        tg.col(c) = st.col(0);
      }
    }
  };
  TrainingSet out;
  fill(0, n_train, out.inputs, out.targets);
  fill(n_train, paths.size(), out.val_inputs, out.val_targets);
  out.input_stats = Normalizer::fit(out.inputs);
  out.target_stats = Normalizer::fit(out.targets);
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(weight_decay >= 0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("TrainConfig: betas in [0,1)");
}

namespace {

void init_adam(MlpModel& model) {
  auto& a = model.adam;
  if (a.mW.size() == model.n_layers()) return;
  a = AdamState{};
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    a.mW.push_back(MatrixXd::Zero(model.W[l].rows(), model.W[l].cols()));
    a.vW.push_back(MatrixXd::Zero(model.W[l].rows(), model.W[l].cols()));
    a.mb.push_back(VectorXd::Zero(model.b[l].size()));
    a.vb.push_back(VectorXd::Zero(model.b[l].size()));
  }
}

void adamw_step(MlpModel& model, const Grads& g, const TrainConfig& c) {
  auto& a = model.adam;
  ++a.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(a.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(a.step));
  auto update = [&](auto& theta, auto& mo, auto& ve, const auto& grad, bool decay) {
    mo = c.beta1 * mo + (1.0 - c.beta1) * grad;
    ve = c.beta2 * ve + (1.0 - c.beta2) * grad.cwiseProduct(grad);
    auto step = ((mo.array() / bc1) / ((ve.array() / bc2).sqrt() + c.adam_eps)).matrix();
    if (decay) theta -= c.learning_rate * (step + c.weight_decay * theta);
    else theta -= c.learning_rate * step;
  };
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    update(model.W[l], a.mW[l], a.vW[l], g.W[l], true);
    update(model.b[l], a.mb[l], a.vb[l], g.b[l], false);
  }
}

}  // namespace

TrainResult train(MlpModel& model, const TrainingSet& data, const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty training set");
  if (data.inputs.rows() != model.input_dim() || data.targets.rows() != model.output_dim())
    throw std::invalid_argument("train: data dimensions do not match the model");
  model.input = data.input_stats;
  model.output = data.target_stats;
  init_adam(model);

  const MatrixXd zin = model.input.apply(data.inputs);
  const MatrixXd ztg = model.output.apply(data.targets);
  MatrixXd zvin, zvtg;
  if (data.val_inputs.cols() > 0) {
    const Eigen::Index nv = data.val_inputs.cols();
    const Eigen::Index keep = std::min<Eigen::Index>(nv, static_cast<Eigen::Index>(config.val_subsample));
    MatrixXd vi(data.val_inputs.rows(), keep), vt(data.val_targets.rows(), keep);
    for (Eigen::Index j = 0; j < keep; ++j) {
      const Eigen::Index src = j * nv / keep;
      vi.col(j) = data.val_inputs.col(src);
      vt.col(j) = data.val_targets.col(src);
    }
    zvin = model.input.apply(vi);
    zvtg = model.output.apply(vt);
  }

  const std::size_t n = data.size();
  const std::size_t bs = std::min(config.batch_size, n);
  const std::size_t nb = config.batches_per_epoch ? config.batches_per_epoch : (n + bs - 1) / bs;
  RngStream rng(config.seed, rng_domain::kTraining + 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  MatrixXd xb(zin.rows(), static_cast<Eigen::Index>(bs)), yb(ztg.rows(), static_cast<Eigen::Index>(bs));
  TrainResult res;
  Grads g;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (!config.batches_per_epoch)
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    double sum = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::size_t lo = b * bs;
      const std::size_t cnt = config.batches_per_epoch ? bs : std::min(bs, n - lo);
      xb.resize(Eigen::NoChange, static_cast<Eigen::Index>(cnt));
      yb.resize(Eigen::NoChange, static_cast<Eigen::Index>(cnt));
      for (std::size_t j = 0; j < cnt; ++j) {
        const std::size_t src = config.batches_per_epoch ? rng.index(n) : perm[lo + j];
        xb.col(static_cast<Eigen::Index>(j)) = zin.col(static_cast<Eigen::Index>(src));
        yb.col(static_cast<Eigen::Index>(j)) = ztg.col(static_cast<Eigen::Index>(src));
      }
      const double loss = backprop(model, xb, yb, &g);
      if (!std::isfinite(loss))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + " (lower the learning rate or check the data)");
      adamw_step(model, g, config);
      sum += loss;
      ++res.steps;
    }
    res.train_loss.push_back(sum / static_cast<double>(nb));
    if (zvin.cols() > 0) res.val_loss.push_back((model.forward_target(zvin) - zvtg).squaredNorm() / static_cast<double>(zvtg.size()));
  }
  if (!model.finite()) throw NumericError("train: parameters became non-finite");
  return res;
}

MatrixXd predict(const MlpModel& model, const MatrixXd& x, double t, std::vector<char>* extrapolated) {
  if (x.rows() != model.input_dim() - 1) throw std::invalid_argument("predict: x has wrong dimension");
  MatrixXd in(x.rows() + 1, x.cols());
  in.topRows(x.rows()) = x;
  in.row(x.rows()).setConstant(t);
  MatrixXd h = model.input.apply(in);
  if (extrapolated) {
    extrapolated->assign(static_cast<std::size_t>(x.cols()), 0);
    for (Eigen::Index j = 0; j < h.cols(); ++j)
      (*extrapolated)[static_cast<std::size_t>(j)] = h.col(j).cwiseAbs().maxCoeff() > 6.0 ? 1 : 0;
  }
  // Coefficient-wise products: each output column depends only on its input
  // column, with the same summation order for any batch size.
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    MatrixXd p = model.W[l].lazyProduct(h);
    p.colwise() += model.b[l];
    h = l + 1 < model.n_layers() ? softplus(p) : p;
  }
  if (!model.residual) return model.output.invert(h);
  MatrixXd z = model.input.apply(in);
  MatrixXd base, coef;
  residual_terms(model, z, base, coef);
  return model.output.invert(base + coef.cwiseProduct(h));
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr char kMagic[8] = {'M', 'B', 'S', 'M', 'L', 'P', '0', '1'};

template <typename T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

struct Writer {
  std::ofstream f;
  template <typename T>
  void put(T v) {
    v = to_le(v);
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put(const MatrixXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) put(a.data()[i]);
  }
  void put(const VectorXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) put(a.data()[i]);
  }
};

struct Reader {
  std::ifstream f;
  std::string path;
  template <typename T>
  T get() {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return to_le(v);
  }
  void get(MatrixXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = get<double>();
  }
  void get(VectorXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = get<double>();
  }
};

std::vector<double> as_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void save_checkpoint(const MlpModel& model, const std::string& path, const TrainConfig* config) {
  Writer w{std::ofstream(path, std::ios::binary), };
  if (!w.f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  w.f.write(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.widths.size()));
  for (auto x : model.widths) w.put<std::uint64_t>(static_cast<std::uint64_t>(x));
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    w.put(model.W[l]);
    w.put(model.b[l]);
  }
  w.put(model.input.mean);
  w.put(model.input.std);
  w.put(model.output.mean);
  w.put(model.output.std);
  w.put<std::uint8_t>(model.residual ? 1 : 0);
  if (model.residual) {
    const auto& p = model.residual->params();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.residual->kind()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.dim));
    for (double v : {p.horizon, p.sigma_min, p.sigma_max, p.beta_min, p.beta_max}) w.put(v);
  }
  const bool has_adam = model.adam.mW.size() == model.n_layers();
  w.put<std::uint8_t>(has_adam ? 1 : 0);
  if (has_adam) {
    w.put<std::uint64_t>(model.adam.step);
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
      w.put(model.adam.mW[l]);
      w.put(model.adam.vW[l]);
      w.put(model.adam.mb[l]);
      w.put(model.adam.vb[l]);
    }
  }
  if (!w.f) throw std::runtime_error("save_checkpoint: write failed for " + path);

  nlohmann::json j;
  j["format"] = "mbscore-mlp";
  j["version"] = kCheckpointVersion;
  j["widths"] = model.widths;
  j["activation"] = "softplus";
  j["input_mean"] = as_vec(model.input.mean);
  j["input_std"] = as_vec(model.input.std);
  j["output_mean"] = as_vec(model.output.mean);
  j["output_std"] = as_vec(model.output.std);
  j["adam_step"] = model.adam.step;
  if (model.residual) {
    const auto& p = model.residual->params();
    j["output_parametrization"] = {{"kind", "noise-residual"},
                                   {"schedule", std::string(to_string(model.residual->kind()))},
                                   {"horizon", p.horizon},
                                   {"sigma_min", p.sigma_min},
                                   {"sigma_max", p.sigma_max},
                                   {"beta_min", p.beta_min},
                                   {"beta_max", p.beta_max}};
  } else {
    j["output_parametrization"] = {{"kind", "direct"}};
  }
  if (config) {
    j["train_config"] = {{"epochs", config->epochs},
                         {"batch_size", config->batch_size},
                         {"batches_per_epoch", config->batches_per_epoch},
                         {"learning_rate", config->learning_rate},
                         {"weight_decay", config->weight_decay},
                         {"beta1", config->beta1},
                         {"beta2", config->beta2},
                         {"adam_eps", config->adam_eps},
                         {"seed", config->seed}};
  }
  std::ofstream side(path + ".json");
  side << j.dump(2) << "\n";
  if (!side) throw std::runtime_error("save_checkpoint: cannot write sidecar for " + path);
}

MlpModel load_checkpoint(const std::string& path) {
  Reader r{std::ifstream(path, std::ios::binary), path};
  if (!r.f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  r.f.read(magic, sizeof(magic));
  if (!r.f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: not an mbscore checkpoint: " + path);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  const auto nw = r.get<std::uint32_t>();
  if (nw < 2 || nw > 64) throw std::runtime_error("load_checkpoint: corrupt layer count");
  MlpModel m;
  for (std::uint32_t i = 0; i < nw; ++i) {
    const auto w = r.get<std::uint64_t>();
    if (w == 0 || w > (1u << 20)) throw std::runtime_error("load_checkpoint: corrupt layer width");
    m.widths.push_back(static_cast<Eigen::Index>(w));
  }
  for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
    m.W.emplace_back(m.widths[l + 1], m.widths[l]);
    m.b.emplace_back(m.widths[l + 1]);
    r.get(m.W.back());
    r.get(m.b.back());
  }
  m.input = Normalizer::identity(m.input_dim());
  m.output = Normalizer::identity(m.output_dim());
  r.get(m.input.mean);
  r.get(m.input.std);
  r.get(m.output.mean);
  r.get(m.output.std);
  if (r.get<std::uint8_t>()) {
    const auto kind = static_cast<ScheduleKind>(r.get<std::uint32_t>());
    if (kind != ScheduleKind::VE && kind != ScheduleKind::VP && kind != ScheduleKind::SubVP)
      throw std::runtime_error("load_checkpoint: corrupt residual schedule");
    ScheduleParams<double> p;
    p.dim = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    p.horizon = r.get<double>();
    p.sigma_min = r.get<double>();
    p.sigma_max = r.get<double>();
    p.beta_min = r.get<double>();
    p.beta_max = r.get<double>();
    m.residual = make_schedule(kind, p);
  }
  if (r.get<std::uint8_t>()) {
    init_adam(m);
    m.adam.step = r.get<std::uint64_t>();
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
      r.get(m.adam.mW[l]);
      r.get(m.adam.vW[l]);
      r.get(m.adam.mb[l]);
      r.get(m.adam.vb[l]);
    }
  }
  if (!m.finite() || !(m.input.std.array() > 0).all() || !(m.output.std.array() > 0).all())
    throw NumericError("load_checkpoint: non-finite or invalid parameters in " + path);
  return m;
}

}  // namespace mbs
