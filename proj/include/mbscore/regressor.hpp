#pragma once

#include "mbscore/linear_score.hpp"

#include <string>

namespace mbs {

/// Per-coordinate affine normalization; degenerate coordinates get std = 1.
struct Normalizer {
  VectorXd mean;
  VectorXd std;

  static Normalizer fit(const MatrixXd& columns);
  static Normalizer identity(Eigen::Index n);
  MatrixXd apply(const MatrixXd& x) const { return (x.colwise() - mean).array().colwise() / std.array(); }
  MatrixXd invert(const MatrixXd& z) const {
    return (z.array().colwise() * std.array()).matrix().colwise() + mean;
  }
};

/// AdamW first and second moments, one entry per parameter block.
struct AdamState {
  std::vector<MatrixXd> mW, vW;
  std::vector<VectorXd> mb, vb;
  std::uint64_t step = 0;
};

/// Fully connected network with softplus hidden activations and a linear
/// output layer. Works in normalized coordinates: input (x, t) -> target x_0.
struct MlpModel {
  std::vector<Eigen::Index> widths;  // in, hidden..., out
  std::vector<MatrixXd> W;           // W[l] is widths[l+1] x widths[l]
  std::vector<VectorXd> b;
  Normalizer input;
  Normalizer output;
  AdamState adam;
  /// When set (VE, VP or SubVP), the network output N is a standardized
  /// correction to the posterior mean of a Gaussian X_0 with the target mean mu
  /// and std s: per coordinate, with v = a_t^2 s^2 + gamma_t,
  ///   E[X_0 | x, t] = mu + a_t s^2 (x - a_t mu) / v + s sqrt(gamma_t / v) N,
  /// using the schedule's closed-form a_t and gamma_t. The loss stays the MSE
  /// on X_0.
  std::optional<Schedule<double>> residual;

  /// LeCun-normal weights, zero biases; normalizers start as identity.
  static MlpModel create(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                         std::uint64_t seed);

  Eigen::Index input_dim() const { return widths.front(); }
  Eigen::Index output_dim() const { return widths.back(); }
  std::size_t n_layers() const { return W.size(); }
  std::size_t n_parameters() const;
  bool finite() const;

  /// Raw network output for normalized inputs (GEMM; used in training).
  MatrixXd forward(const MatrixXd& z) const;
  /// Prediction in normalized target coordinates for normalized inputs.
  MatrixXd forward_target(const MatrixXd& z) const;

  VectorXd parameters() const;
  void set_parameters(const VectorXd& theta);
};

/// Mean squared error over all entries of a normalized batch, and its gradient
/// with respect to the flattened parameters (same order as parameters()).
double mse_loss(const MlpModel& model, const MatrixXd& z_in, const MatrixXd& z_target, VectorXd* gradient = nullptr);

/// Examples (X_k, t_k) -> X_0 for every non-diverged path and node k >= 1,
/// split 90/10 by path.
struct TrainingSet {
  MatrixXd inputs;   // (m + 1) x n, raw
  MatrixXd targets;  // m x n, raw
  MatrixXd val_inputs;
  MatrixXd val_targets;
  Normalizer input_stats;   // fitted on the training split
  Normalizer target_stats;  // fitted on the training split

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

TrainingSet build_training_set(const PathEnsemble& ensemble, double val_fraction = 0.1, std::uint64_t seed = 0);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 256;
  std::size_t batches_per_epoch = 0;  // 0: one full shuffled pass per epoch
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t val_subsample = 4096;

  void validate() const;
};

struct TrainResult {
  std::vector<double> train_loss;  // mean batch loss per epoch
  std::vector<double> val_loss;    // empty when there is no validation split
  std::uint64_t steps = 0;
};

/// AdamW minibatch training in normalized coordinates. Installs the training
/// set's normalization statistics into the model first. Throws NumericError
/// when the loss becomes non-finite.
TrainResult train(MlpModel& model, const TrainingSet& data, const TrainConfig& config);

/// Denormalized E[X_0 | X_t = x] for the columns of x. Every column is
/// evaluated on its own, so a batch of one equals the matching column of a
/// larger batch bitwise. `extrapolated[j]` is set when a normalized input of
/// column j exceeds 6 in magnitude.
MatrixXd predict(const MlpModel& model, const MatrixXd& x, double t, std::vector<char>* extrapolated = nullptr);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint at `path` plus a JSON sidecar at `path + ".json"`.
void save_checkpoint(const MlpModel& model, const std::string& path, const TrainConfig* config = nullptr);
MlpModel load_checkpoint(const std::string& path);

/// Conditional mean backed by a trained regressor.
class RegressorMean final : public ConditionalMean {
 public:
  explicit RegressorMean(std::shared_ptr<const MlpModel> model) : model_(std::move(model)) {}
  MatrixXd mean(double t, const MatrixXd& points, const LinearMoments&) const override {
    return predict(*model_, points, t);
  }

 private:
  std::shared_ptr<const MlpModel> model_;
};

}  // namespace mbs
