#pragma once

#include <cstdint>

#include "cfcep/common.hpp"

namespace cfcep {

/// K mutually orthogonal unit-energy pilots of length tau_c, one per column.
struct PilotBook {
  int tau_c = 0;
  Eigen::MatrixXcd pilots;  // tau_c x K

  int users() const { return static_cast<int>(pilots.cols()); }
};

/// Columns of the normalized tau_c-point DFT matrix. Throws ConfigError when tau_c < K.
PilotBook make_pilots(int users, int tau_c);

/// Received uplink pilot block at every AP and its projections onto each pilot.
struct UplinkObservation {
  Eigen::MatrixXcd y;      // M x tau_c, row m is y_m^T
  Eigen::MatrixXcd y_bar;  // M x K, y_bar(m,k) = q_k^H y_m
  double rho = 0.0;
  double sigma2 = 1.0;
};

/// y_m = sqrt(rho tau_c) sum_k g(m,k) q_k + n with n ~ CN(0, I). `g` is M x K.
/// Noise comes from the stream `seed`; `with_noise = false` gives the noise-free observation.
UplinkObservation receive_pilots(const Eigen::MatrixXcd& g, const PilotBook& pilots, double rho,
                                 std::uint64_t seed, bool with_noise = true);

/// Per-link MMSE statistics: beta_bar = sigma_h^2 beta, gamma = Var(g_hat).
struct MmseLinkStats {
  double beta_bar = 0.0;
  double gamma = 0.0;
  double est_coeff = 0.0;
  double sigma2 = 1.0;

  double error_var() const { return beta_bar - gamma; }
};

/// est_coeff = sqrt(rho tau_c) beta_bar / (rho tau_c beta_bar + sigma2),
/// gamma = rho tau_c beta_bar^2 / (rho tau_c beta_bar + sigma2).
MmseLinkStats link_stats(double beta, double sigma2_h, double rho, int tau_c, double sigma2 = 1.0);

/// MMSE estimate of one link from its projected observation. Uses only this link's data.
cplx mmse_estimate(cplx y_bar, const MmseLinkStats& stats, double rho, int tau_c);

/// Elementwise MMSE estimates for a whole M x K projection block given the gain matrix.
Eigen::MatrixXcd mmse_estimate(const Eigen::MatrixXcd& y_bar, const Eigen::MatrixXd& est_coeff);

}  // namespace cfcep
