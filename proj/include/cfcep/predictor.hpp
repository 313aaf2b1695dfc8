#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cfcep/mlp.hpp"

namespace cfcep {

/// Interval of normalized Doppler values served by one predictor.
struct Band {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_closed = false;
  bool hi_closed = true;

  bool contains(double f_n) const;
  double midpoint() const { return 0.5 * (lo + hi); }
  std::string label() const;

  friend bool operator==(const Band&, const Band&) = default;
};

/// (0.05, 0.10], (0.10, 0.16), [0.16, 0.20]
const std::array<Band, 3>& default_bands();
/// Index into default_bands() of the band containing f_n, or -1.
int band_index(double f_n);

/// Number of ET-CI estimates fed to the predictor: ceil(Q / (N + 1)).
int history_depth(int order, int e2p);
int feature_dim(int order, int e2p);
int target_dim(int e2p);

/// Predictor for one Doppler band and one 1:N estimate-to-predict ratio.
struct MlpModel {
  Band band;
  int e2p = 1;
  int order = 63;
  Mlp<double> net;

  int history() const { return history_depth(order, e2p); }
  /// Throws DimensionError unless the network dims match 2*ceil(Q/(N+1))+2 -> 2N.
  void validate() const;
};

/// Real feature vector: (Re, Im) of the most recent `depth` estimates, most recent first,
/// followed by -a1*Re(g_hat(l)), -a1*Im(g_hat(l)). Throws WarmupError on short history.
Eigen::VectorXd build_features(std::span<const cplx> history, double a1, int depth);

/// Writes the same features into column `col` of `out` (no allocation).
void build_features_into(std::span<const cplx> history, double a1, int depth,
                         Eigen::Ref<Eigen::MatrixXd> out, Eigen::Index col);

/// Predictions for CIs l+1 .. l+N from the ET-CI history ending at l.
std::vector<cplx> predict_channels(const MlpModel& model, std::span<const cplx> history, double a1);

/// Pairs a 2N-row output block into N x n complex predictions.
Eigen::MatrixXcd pair_outputs(const Eigen::MatrixXd& outputs);

/// Models keyed by (band index, N). Keeps a single-precision copy for batched inference.
class ModelBank {
 public:
  void insert(MlpModel model);
  bool contains(int band, int e2p) const;
  const MlpModel& at(int band, int e2p) const;
  const Mlp<float>& fast(int band, int e2p) const;
  std::size_t size() const { return models_.size(); }

  /// Loads every file named by model_filename() found in `dir` for the given ratios.
  static ModelBank load_directory(const std::filesystem::path& dir, const std::vector<int>& e2p_list);

 private:
  std::map<std::pair<int, int>, MlpModel> models_;
  std::map<std::pair<int, int>, Mlp<float>> fast_;
};

/// "model_b<band+1>_n<N>.bin"
std::string model_filename(int band, int e2p);

/// Model whose band contains f_n. Throws UnsupportedMobilityError outside (0.05, 0.2],
/// ConfigError if that band has no model for N.
const MlpModel& select_model(const ModelBank& bank, double f_n, int e2p);

struct TrainingData {
  Eigen::MatrixXd features;  // d_in x n
  Eigen::MatrixXd targets;   // d_out x n

  std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
};

struct TrainingDataSpec {
  Band band;
  int e2p = 1;
  int order = 63;
  int n_traces = 500;
  int trace_len = 150;
  double rho = 100.0;  // pilot power relative to noise for a unit-gain link
  int tau_c = 1;
  /// Per-trace pilot power drawn log-uniformly in [rho - spread_db, rho] (dB); 0 keeps it fixed.
  double rho_spread_db = 0.0;
  std::uint64_t seed = 1;
};

/// Number of full prediction windows in a trace of `trace_len` CIs.
int windows_per_trace(int trace_len, int order, int e2p);

/// Simulates unit-gain links with f_n drawn uniformly in the band, MMSE-estimates them at ET
/// CIs only, and emits (features from estimates, true channels of the following N CIs).
TrainingData generate_training_data(const TrainingDataSpec& spec);

/// Mean |h - h_pred|^2 per predicted complex channel.
double complex_mse(const MlpModel& model, const TrainingData& data);

/// Identity-mapping error 2 sigma_h^2 (1 - J0(2 pi f_n)) for a one-CI-stale channel.
double identity_mapping_mse(double f_n, double sigma2_h = 1.0);

// Model file: see README "Model file format".
inline constexpr char kModelMagic[8] = {'C', 'F', 'C', 'E', 'P', 'M', 'L', 'P'};
inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

// Dataset file: magic, version, d_in, d_out, count, then rows of features|targets.
inline constexpr char kDatasetMagic[8] = {'C', 'F', 'C', 'E', 'P', 'D', 'A', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const TrainingData& data, const std::filesystem::path& path);
TrainingData load_dataset(const std::filesystem::path& path);

/// Trains a band model with the given hyperparameters; arithmetic in single precision
/// when `single_precision` is set.
MlpModel train_model(const TrainingData& data, const Band& band, int e2p, int order,
                     const TrainingHyper& hyper, std::uint64_t seed, bool single_precision = true,
                     TrainingReport* report = nullptr);

}  // namespace cfcep
