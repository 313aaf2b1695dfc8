#include "cfcep/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cfcep {

template <typename Scalar>
Mlp<Scalar>::Mlp(const std::vector<int>& dims, Scalar slope) : leaky_slope(slope) {
  if (dims.size() < 2) throw DimensionError("Mlp: need at least input and output dims");
  for (int d : dims)
    if (d < 1) throw DimensionError("Mlp: layer dims must be positive");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    weights.push_back(Matrix::Zero(dims[i + 1], dims[i]));
    biases.push_back(Vector::Zero(dims[i + 1]));
  }
  input_mean = Vector::Zero(dims.front());
  input_std = Vector::Ones(dims.front());
  output_mean = Vector::Zero(dims.back());
  output_std = Vector::Ones(dims.back());
}

template <typename Scalar>
std::vector<int> Mlp<Scalar>::dims() const {
  std::vector<int> d;
  if (weights.empty()) return d;
  d.push_back(static_cast<int>(weights.front().cols()));
  for (const auto& w : weights) d.push_back(static_cast<int>(w.rows()));
  return d;
}

template <typename Scalar>
std::size_t Mlp<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    n += static_cast<std::size_t>(weights[i].size() + biases[i].size());
  return n;
}

template <typename Scalar>
void Mlp<Scalar>::initialize(Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double fan_in = static_cast<double>(weights[i].cols());
    const bool output = i + 1 == weights.size();
    const double gain = output ? 1.0 : 2.0 / (1.0 + static_cast<double>(leaky_slope * leaky_slope));
    const double bound = std::sqrt(3.0 * gain / fan_in);
    for (Eigen::Index c = 0; c < weights[i].cols(); ++c)
      for (Eigen::Index r = 0; r < weights[i].rows(); ++r)
        weights[i](r, c) = static_cast<Scalar>(bound * unit(rng));
    biases[i].setZero();
  }
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix Mlp<Scalar>::forward_normalized(const Matrix& xn) const {
  Matrix a = xn;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    Matrix z = weights[i] * a;
    z.colwise() += biases[i];
    if (i + 1 < weights.size()) {
      const Scalar s = leaky_slope;
      a = z.unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; });
    } else {
      a = std::move(z);
    }
  }
  return a;
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix Mlp<Scalar>::forward(const Matrix& x) const {
  if (x.rows() != input_dim())
    throw DimensionError("Mlp::forward: feature length does not match the input layer");
  Matrix xn = (x.colwise() - input_mean).array().colwise() / input_std.array();
  Matrix yn = forward_normalized(xn);
  return (yn.array().colwise() * output_std.array()).matrix().colwise() + output_mean;
}

template <typename Scalar>
Scalar mse_loss(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& xn,
                const typename Mlp<Scalar>::Matrix& yn, MlpGradient<Scalar>* grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const std::size_t layers = net.weights.size();
  std::vector<Matrix> acts;  // acts[i] is the input of layer i
  std::vector<Matrix> pre;   // pre-activations of hidden layers
  acts.reserve(layers);
  acts.push_back(xn);
  Matrix out;
  for (std::size_t i = 0; i < layers; ++i) {
    Matrix z = net.weights[i] * acts.back();
    z.colwise() += net.biases[i];
    if (i + 1 < layers) {
      const Scalar s = net.leaky_slope;
      acts.push_back(z.unaryExpr([s](Scalar v) { return v > Scalar(0) ? v : s * v; }));
      pre.push_back(std::move(z));
    } else {
      out = std::move(z);
    }
  }
  const Matrix diff = out - yn;
  const Scalar count = static_cast<Scalar>(diff.size());
  const Scalar loss = diff.squaredNorm() / count;
  if (!grad) return loss;

  grad->weights.resize(layers);
  grad->biases.resize(layers);
  Matrix delta = (Scalar(2) / count) * diff;
  for (std::size_t i = layers; i-- > 0;) {
    grad->weights[i].noalias() = delta * acts[i].transpose();
    grad->biases[i] = delta.rowwise().sum();
    if (i == 0) break;
    Matrix back = net.weights[i].transpose() * delta;
    const Scalar s = net.leaky_slope;
    delta = back.cwiseProduct(pre[i - 1].unaryExpr([s](Scalar v) { return v > Scalar(0) ? Scalar(1) : s; }));
  }
  return loss;
}

template <typename Scalar>
AdamState<Scalar>::AdamState(const Mlp<Scalar>& net, const AdamSettings& settings) : s_(settings) {
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    m_.weights.push_back(Mlp<Scalar>::Matrix::Zero(net.weights[i].rows(), net.weights[i].cols()));
    v_.weights.push_back(m_.weights.back());
    m_.biases.push_back(Mlp<Scalar>::Vector::Zero(net.biases[i].size()));
    v_.biases.push_back(m_.biases.back());
  }
}

template <typename Scalar>
void AdamState<Scalar>::step(Mlp<Scalar>& net, const MlpGradient<Scalar>& grad) {
  ++t_;
  const Scalar b1 = static_cast<Scalar>(s_.beta1);
  const Scalar b2 = static_cast<Scalar>(s_.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(s_.beta1, static_cast<double>(t_)));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(s_.beta2, static_cast<double>(t_)));
  const Scalar lr = static_cast<Scalar>(s_.learning_rate);
  const Scalar eps = static_cast<Scalar>(s_.epsilon);
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < net.weights.size(); ++i) {
    update(net.weights[i], m_.weights[i], v_.weights[i], grad.weights[i]);
    update(net.biases[i], m_.biases[i], v_.biases[i], grad.biases[i]);
  }
}

namespace {

template <typename Scalar>
typename Mlp<Scalar>::Matrix gather(const Eigen::MatrixXd& src, const std::vector<Eigen::Index>& idx,
                                    std::size_t begin, std::size_t end) {
  typename Mlp<Scalar>::Matrix out(src.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t j = begin; j < end; ++j)
    out.col(static_cast<Eigen::Index>(j - begin)) = src.col(idx[j]).template cast<Scalar>();
  return out;
}

void column_stats(const Eigen::MatrixXd& data, Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const double n = static_cast<double>(data.cols());
  mean = data.rowwise().sum() / n;
  sd = ((data.colwise() - mean).array().square().rowwise().sum() / n).sqrt().matrix();
  for (Eigen::Index i = 0; i < sd.size(); ++i)
    if (!(sd(i) > 1e-12)) sd(i) = 1.0;
}

// Mean squared error in raw target units, evaluated in chunks.
template <typename Scalar>
double raw_mse(const Mlp<Scalar>& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() == 0) return 0.0;
  double acc = 0.0;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index c = 0; c < x.cols(); c += chunk) {
    const Eigen::Index n = std::min(chunk, x.cols() - c);
    const auto pred = net.forward(x.middleCols(c, n).template cast<Scalar>()).template cast<double>();
    acc += (pred - y.middleCols(c, n)).squaredNorm();
  }
  return acc / static_cast<double>(y.size());
}

}  // namespace

template <typename Scalar>
Mlp<double> train_mlp(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                      const TrainingHyper& hyper, std::uint64_t seed, TrainingReport* report) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Eigen::Index n = features.cols();
  if (n == 0) throw ConfigError("train: empty dataset");
  if (targets.cols() != n) throw DimensionError("train: feature and target counts differ");
  if (hyper.batch_size < 1 || hyper.max_epochs < 1 || hyper.hidden_layers < 0 || hyper.hidden_width < 1)
    throw ConfigError("train: invalid hyperparameters");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng split_rng(derive_seed(seed, {0}));
  std::shuffle(order.begin(), order.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(hyper.validation_fraction * static_cast<double>(n)));
  if (n_val >= static_cast<std::size_t>(n)) n_val = static_cast<std::size_t>(n) - 1;
  const std::size_t n_train = static_cast<std::size_t>(n) - n_val;

  Eigen::MatrixXd x_train(features.rows(), static_cast<Eigen::Index>(n_train));
  Eigen::MatrixXd y_train(targets.rows(), static_cast<Eigen::Index>(n_train));
  Eigen::MatrixXd x_val(features.rows(), static_cast<Eigen::Index>(n_val));
  Eigen::MatrixXd y_val(targets.rows(), static_cast<Eigen::Index>(n_val));
  for (std::size_t j = 0; j < n_train; ++j) {
    x_train.col(static_cast<Eigen::Index>(j)) = features.col(order[j]);
    y_train.col(static_cast<Eigen::Index>(j)) = targets.col(order[j]);
  }
  for (std::size_t j = 0; j < n_val; ++j) {
    x_val.col(static_cast<Eigen::Index>(j)) = features.col(order[n_train + j]);
    y_val.col(static_cast<Eigen::Index>(j)) = targets.col(order[n_train + j]);
  }

  Eigen::VectorXd in_mean, in_sd, out_mean, out_sd;
  column_stats(x_train, in_mean, in_sd);
  column_stats(y_train, out_mean, out_sd);
  const Eigen::MatrixXd xn_train = (x_train.colwise() - in_mean).array().colwise() / in_sd.array();
  const Eigen::MatrixXd yn_train = (y_train.colwise() - out_mean).array().colwise() / out_sd.array();
  const bool has_val = n_val > 0;
  const Eigen::MatrixXd& xv = has_val ? x_val : x_train;
  const Eigen::MatrixXd& yv = has_val ? y_val : y_train;
  const Matrix xn_val = ((xv.colwise() - in_mean).array().colwise() / in_sd.array()).matrix().template cast<Scalar>();
  const Matrix yn_val = ((yv.colwise() - out_mean).array().colwise() / out_sd.array()).matrix().template cast<Scalar>();

  std::vector<int> dims{static_cast<int>(features.rows())};
  for (int i = 0; i < hyper.hidden_layers; ++i) dims.push_back(hyper.hidden_width);
  dims.push_back(static_cast<int>(targets.rows()));
  Mlp<Scalar> net(dims, static_cast<Scalar>(hyper.leaky_slope));
  Rng init_rng(derive_seed(seed, {1}));
  net.initialize(init_rng);
  net.input_mean = in_mean.cast<Scalar>();
  net.input_std = in_sd.cast<Scalar>();
  net.output_mean = out_mean.cast<Scalar>();
  net.output_std = out_sd.cast<Scalar>();

  auto validation_loss = [&](const Mlp<Scalar>& m) {
    double acc = 0.0;
    const Eigen::Index chunk = 4096;
    for (Eigen::Index c = 0; c < xn_val.cols(); c += chunk) {
      const Eigen::Index k = std::min(chunk, xn_val.cols() - c);
      acc += static_cast<double>((m.forward_normalized(xn_val.middleCols(c, k)) - yn_val.middleCols(c, k)).squaredNorm());
    }
    return acc / static_cast<double>(yn_val.size());
  };

  AdamState<Scalar> adam(net, hyper.adam);
  Mlp<Scalar> best = net;
  double best_loss = validation_loss(net);
  int best_epoch = 0;
  std::vector<double> history, best_history;
  std::vector<Eigen::Index> idx(n_train);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  MlpGradient<Scalar> grad;
  int epoch = 0;
  for (epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, {2, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);
    for (std::size_t b = 0; b < n_train; b += static_cast<std::size_t>(hyper.batch_size)) {
      const std::size_t e = std::min(n_train, b + static_cast<std::size_t>(hyper.batch_size));
      const Matrix xb = gather<Scalar>(xn_train, idx, b, e);
      const Matrix yb = gather<Scalar>(yn_train, idx, b, e);
      const Scalar loss = mse_loss(net, xb, yb, &grad);
      if (!std::isfinite(static_cast<double>(loss))) {
        std::ostringstream msg;
        msg << "train: loss became non-finite at epoch " << epoch << ", batch " << b / hyper.batch_size
            << " (learning rate " << hyper.adam.learning_rate << ")";
        throw NumericalError(msg.str());
      }
      adam.step(net, grad);
    }
    const double vl = validation_loss(net);
    if (!std::isfinite(vl)) throw NumericalError("train: validation loss became non-finite");
    history.push_back(vl);
    if (vl < best_loss) {
      best_loss = vl;
      best = net;
      best_epoch = epoch;
    }
    best_history.push_back(best_loss);
    if (epoch - best_epoch >= hyper.patience) break;
  }

  Mlp<double> result = best.template cast<double>();
  // normalization stats are kept in full precision
  result.input_mean = in_mean;
  result.input_std = in_sd;
  result.output_mean = out_mean;
  result.output_std = out_sd;
  if (report) {
    report->train_mse = raw_mse(best, x_train, y_train);
    report->validation_mse = has_val ? raw_mse(best, x_val, y_val) : report->train_mse;
    report->best_epoch = best_epoch;
    report->epochs_run = std::min(epoch, hyper.max_epochs);
    report->train_samples = n_train;
    report->validation_samples = n_val;
    report->validation_history = std::move(history);
    report->best_history = std::move(best_history);
  }
  return result;
}

template class Mlp<float>;
template class Mlp<double>;
template class AdamState<float>;
template class AdamState<double>;
template float mse_loss(const Mlp<float>&, const Mlp<float>::Matrix&, const Mlp<float>::Matrix&, MlpGradient<float>*);
template double mse_loss(const Mlp<double>&, const Mlp<double>::Matrix&, const Mlp<double>::Matrix&, MlpGradient<double>*);
template Mlp<double> train_mlp<float>(const Eigen::MatrixXd&, const Eigen::MatrixXd&, const TrainingHyper&, std::uint64_t,
                                      TrainingReport*);
template Mlp<double> train_mlp<double>(const Eigen::MatrixXd&, const Eigen::MatrixXd&, const TrainingHyper&, std::uint64_t,
                                       TrainingReport*);

}  // namespace cfcep
