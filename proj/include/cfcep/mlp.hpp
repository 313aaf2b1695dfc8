#pragma once

#include <cstdint>
#include <vector>

#include "cfcep/common.hpp"

namespace cfcep {

/// Fully connected regressor: leaky-rectifier hidden layers, affine output, with frozen
/// per-feature input/output standardization. Samples are columns.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Mlp() = default;
  /// Zero weights and biases, identity normalization (mean 0, std 1).
  Mlp(const std::vector<int>& dims, Scalar leaky_slope);

  std::vector<Matrix> weights;  // weights[i] is dims[i+1] x dims[i]
  std::vector<Vector> biases;
  Scalar leaky_slope = Scalar(0.01);
  Vector input_mean, input_std, output_mean, output_std;

  std::vector<int> dims() const;
  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  std::size_t parameter_count() const;

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng);

  /// Raw features (d_in x n) to raw predictions (d_out x n).
  Matrix forward(const Matrix& x) const;
  /// Standardized features to standardized predictions.
  Matrix forward_normalized(const Matrix& xn) const;

  template <typename T>
  Mlp<T> cast() const {
    Mlp<T> out;
    for (const auto& w : weights) out.weights.push_back(w.template cast<T>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<T>());
    out.leaky_slope = static_cast<T>(leaky_slope);
    out.input_mean = input_mean.template cast<T>();
    out.input_std = input_std.template cast<T>();
    out.output_mean = output_mean.template cast<T>();
    out.output_std = output_std.template cast<T>();
    return out;
  }
};

template <typename Scalar>
struct MlpGradient {
  std::vector<typename Mlp<Scalar>::Matrix> weights;
  std::vector<typename Mlp<Scalar>::Vector> biases;
};

/// Mean squared error over all entries of a standardized batch, and its gradient
/// by backpropagation when `grad` is non-null.
template <typename Scalar>
Scalar mse_loss(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& xn,
                const typename Mlp<Scalar>::Matrix& yn, MlpGradient<Scalar>* grad);

struct AdamSettings {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class AdamState {
 public:
  AdamState(const Mlp<Scalar>& net, const AdamSettings& settings);

  void step(Mlp<Scalar>& net, const MlpGradient<Scalar>& grad);
  long steps() const { return t_; }

 private:
  AdamSettings s_;
  long t_ = 0;
  MlpGradient<Scalar> m_, v_;
};

struct TrainingHyper {
  AdamSettings adam;
  int batch_size = 256;
  int max_epochs = 200;
  int patience = 20;
  double validation_fraction = 0.1;
  int hidden_width = 1024;
  int hidden_layers = 3;
  double leaky_slope = 0.01;
};

struct TrainingReport {
  double train_mse = 0.0;       // raw units, per real output
  double validation_mse = 0.0;  // raw units, per real output
  int best_epoch = 0;
  int epochs_run = 0;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::vector<double> validation_history;  // standardized loss per epoch
  std::vector<double> best_history;        // best-so-far standardized validation loss
};

/// Trains a regressor from features (d_in x n) to targets (d_out x n) with mini-batch Adam.
/// The split is shuffled once with `seed`; standardization uses the training split only; the
/// returned network holds the parameters with the best validation loss. Arithmetic runs in
/// `Scalar`; the result is widened to double.
template <typename Scalar>
Mlp<double> train_mlp(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      const TrainingHyper& hyper, std::uint64_t seed,
                      TrainingReport* report = nullptr);

extern template class Mlp<float>;
extern template class Mlp<double>;
extern template class AdamState<float>;
extern template class AdamState<double>;

}  // namespace cfcep
