#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cfcep/cep_scheduler.hpp"
#include "cfcep/channel_model.hpp"
#include "cfcep/mlp.hpp"

namespace cfcep {

/// Everything an experiment run depends on. Loaded from a flat `key = value` file.
struct ExperimentConfig {
  int aps = 64;                 // M
  int users = 40;               // K
  double area_side_m = 1000.0;
  int order = 63;               // Q
  int length = 150;             // L, CIs per trace
  DopplerSpec doppler = DopplerSpec::uniform(0.05, 0.2);
  std::vector<int> e2p = {1, 2};
  std::vector<Scheme> schemes = {Scheme::Tdd, Scheme::Cep, Scheme::Identity};
  int tau = 200;
  int tau_c = 0;  // 0: equal to K
  double bandwidth_hz = 20e6;
  LargeScaleModel large_scale;
  double rho_w = 0.1;
  double p_d_w = 0.1;
  double noise_psd_dbw_hz = -195.0;
  int mc_realizations = 1000;  // per window position and deployment
  int deployments = 5;
  int batches = 10;
  bool predicted_only = false;  // average rates over PT slots only
  std::uint64_t seed = 1;
  std::string models = "models";

  // predictor training
  int train_traces = 1000;
  double train_snr_db = 20.0;
  double train_snr_spread_db = 0.0;
  TrainingHyper hyper;
  bool train_single_precision = true;

  // sweep grids
  std::vector<double> fn_grid = {0.06, 0.08, 0.10, 0.12, 0.14, 0.16, 0.18, 0.20};
  std::vector<int> users_grid = {10, 20, 30, 40, 50, 60};
  std::vector<int> aps_grid = {16, 32, 48, 64, 96};

  double noise_power_w() const;
  /// Transmit powers divided by the noise power.
  double rho() const { return rho_w / noise_power_w(); }
  double p_d() const { return p_d_w / noise_power_w(); }
  int pilot_length() const { return tau_c > 0 ? tau_c : users; }

  /// Throws ConfigError naming the offending key (and its source line when known).
  void validate() const;
  /// Canonical `key = value` text; parse(to_text()) reproduces the config.
  std::string to_text() const;
  /// Fingerprint of the canonical text.
  std::string hash() const;

  /// Line numbers of keys set by the parsed file, for error messages.
  std::map<std::string, int> source_lines;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace cfcep
