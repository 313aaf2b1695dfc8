#include "cfcep/pilot_estimation.hpp"

#include <cmath>
#include <numbers>

namespace cfcep {

PilotBook make_pilots(int users, int tau_c) {
  if (users < 1) throw ConfigError("make_pilots: need at least one user");
  if (tau_c < users)
    throw ConfigError("make_pilots: pilot length tau_c must be >= number of users (no pilot reuse)");
  PilotBook book;
  book.tau_c = tau_c;
  book.pilots.resize(tau_c, users);
  const double scale = 1.0 / std::sqrt(static_cast<double>(tau_c));
  for (int k = 0; k < users; ++k) {
    for (int t = 0; t < tau_c; ++t) {
      // reduce t*k mod tau_c first so the phase stays accurate for long pilots
      const long idx = (static_cast<long>(t) * k) % tau_c;
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(idx) / tau_c;
      book.pilots(t, k) = std::polar(scale, phase);
    }
  }
  return book;
}

UplinkObservation receive_pilots(const Eigen::MatrixXcd& g, const PilotBook& pilots, double rho,
                                 std::uint64_t seed, bool with_noise) {
  if (g.cols() != pilots.users())
    throw DimensionError("receive_pilots: channel block and pilot book disagree on K");
  UplinkObservation obs;
  obs.rho = rho;
  const double amp = std::sqrt(rho * pilots.tau_c);
  obs.y.noalias() = amp * g * pilots.pilots.transpose();
  if (with_noise) {
    Rng rng(seed);
    for (Eigen::Index t = 0; t < obs.y.cols(); ++t)
      for (Eigen::Index m = 0; m < obs.y.rows(); ++m) obs.y(m, t) += complex_gaussian(rng, 1.0);
  }
  obs.y_bar.noalias() = obs.y * pilots.pilots.conjugate();
  return obs;
}

MmseLinkStats link_stats(double beta, double sigma2_h, double rho, int tau_c, double sigma2) {
  MmseLinkStats s;
  s.sigma2 = sigma2;
  s.beta_bar = sigma2_h * beta;
  const double snr = rho * tau_c * s.beta_bar;
  s.est_coeff = std::sqrt(rho * tau_c) * s.beta_bar / (snr + sigma2);
  s.gamma = snr * s.beta_bar / (snr + sigma2);
  return s;
}

cplx mmse_estimate(cplx y_bar, const MmseLinkStats& stats, double rho, int tau_c) {
  const double root = std::sqrt(rho * tau_c);
  const double c = root * stats.beta_bar / (root * root * stats.beta_bar + stats.sigma2);
  return c * y_bar;
}

Eigen::MatrixXcd mmse_estimate(const Eigen::MatrixXcd& y_bar, const Eigen::MatrixXd& est_coeff) {
  if (y_bar.rows() != est_coeff.rows() || y_bar.cols() != est_coeff.cols())
    throw DimensionError("mmse_estimate: observation and gain blocks differ in shape");
  return y_bar.cwiseProduct(est_coeff.cast<cplx>());
}

}  // namespace cfcep
