#pragma once

#include <cstdint>
#include <vector>

#include "cfcep/common.hpp"

namespace cfcep {

/// Zeroth-order Bessel function of the first kind. Throws DomainError for non-finite x.
double bessel_j0(double x);

/// Normalized temporal autocorrelation J0(2*pi*f_n*|lag|) of the fading process.
double acf(double f_n, long lag);

/// AR(Q) description of one normalized-Doppler value.
///
/// `acf` holds R[0..Q], `coeffs` holds a[1..Q] (stored 0-based) for the recursion
/// h[l] = -sum_q a_q h[l-q] + w[l], w ~ CN(0, innovation_var).
struct AgingProfile {
  double f_n = 0.0;
  int order = 0;
  Eigen::VectorXd acf;
  Eigen::VectorXd coeffs;
  double innovation_var = 0.0;
  double stationary_var = 0.0;
  /// Diagonal loading (relative to R[0]) that was needed to obtain a stable fit; 0 if none.
  double loading = 0.0;

  /// max_i |(R a + u)_i| against the unloaded Toeplitz ACF matrix.
  double yule_walker_residual() const;
};

/// Fits AR(order) coefficients to the J0 autocorrelation by solving the Yule-Walker system.
///
/// The Toeplitz system is solved by partial-pivot LU. When the reciprocal condition
/// estimate is below 1e-12, or the unloaded solution is not minimum phase, the diagonal
/// is loaded with eps*R[0] for eps = 1e-12, 1e-11, ... 1e-6 until the AR polynomial is
/// stable. Throws NumericalError if no loading in that ladder works.
AgingProfile fit_ar(double f_n, int order);

/// Green's-function impulse response F_0 = 1, F_j = -sum_q a_q F_{j-q}, truncated once the
/// energy of the last `order` terms drops below `rel_tol` of the accumulated energy.
std::vector<double> green_function(const Eigen::VectorXd& coeffs, double rel_tol = 1e-10,
                                   std::size_t max_terms = 100000);

/// sigma_h^2 = sigma_w^2 * sum_j F_j^2. Throws NumericalError if the recursion diverges.
double stationary_variance(const AgingProfile& profile);

/// True when all roots of 1 + a_1 z^-1 + ... + a_Q z^-Q lie strictly inside the unit circle
/// (Schur-Cohn step-down test).
bool is_minimum_phase(const Eigen::VectorXd& coeffs);

/// Generates AR(Q) small-scale fading for many links sharing one profile.
///
/// Each link starts from a draw of the AR state out of the model's own stationary
/// covariance, then runs a discarded burn-in of 10*Q samples. Link i uses the RNG stream
/// derive_seed(seed, {i}), so the output does not depend on evaluation order.
class TraceGenerator {
 public:
  explicit TraceGenerator(const AgingProfile& profile);

  /// L x n_links complex matrix; column i is link i.
  Eigen::MatrixXcd generate(int n_links, int length, std::uint64_t seed) const;

  /// Single link written into `out` (length L).
  void generate_link(std::uint64_t link_seed, Eigen::Ref<Eigen::VectorXcd> out) const;

  const AgingProfile& profile() const { return profile_; }

 private:
  AgingProfile profile_;
  Eigen::MatrixXd state_factor_;  // Q x Q, factor * factor^T = stationary state covariance
};

Eigen::MatrixXcd generate_trace(const AgingProfile& profile, int n_links, int length,
                                std::uint64_t seed);

/// Three-slope path loss with log-normal shadowing beyond the second breakpoint.
struct LargeScaleModel {
  double carrier_mhz = 1900.0;
  double ap_height_m = 15.0;
  double user_height_m = 1.65;
  double d0_m = 10.0;
  double d1_m = 50.0;
  double shadowing_db = 8.0;

  /// Hata-COST231 constant term L in dB.
  double hata_constant_db() const;
  /// Deterministic path gain in dB (negative), before shadowing.
  double path_gain_db(double distance_m) const;
};

/// Per-user normalized Doppler: either one fixed value or uniform on (lo, hi].
struct DopplerSpec {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  double lo = 0.1;
  double hi = 0.1;

  static DopplerSpec fixed(double f_n) { return {Kind::Fixed, f_n, f_n}; }
  static DopplerSpec uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
};

inline constexpr double kMaxNormalizedDoppler = 0.2;

struct Deployment {
  double area_side = 0.0;
  Eigen::Matrix2Xd ap_positions;
  Eigen::Matrix2Xd user_positions;
  Eigen::MatrixXd beta;     // M x K linear power gains
  Eigen::VectorXd doppler;  // K
  std::uint64_t seed = 0;

  int aps() const { return static_cast<int>(ap_positions.cols()); }
  int users() const { return static_cast<int>(user_positions.cols()); }
};

/// Large-scale gains for given positions; `rng` supplies the shadowing draws (one per link).
Eigen::MatrixXd large_scale_gains(const Eigen::Matrix2Xd& aps, const Eigen::Matrix2Xd& users,
                                  const LargeScaleModel& model, Rng& rng);

/// Uniform random AP/user placement on [0, area_side]^2 and per-user Doppler draws.
Deployment make_deployment(int aps, int users, double area_side, const DopplerSpec& doppler,
                           std::uint64_t seed, const LargeScaleModel& model = {});

}  // namespace cfcep
