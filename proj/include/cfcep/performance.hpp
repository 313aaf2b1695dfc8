#pragma once

#include <cstdint>
#include <vector>

#include "cfcep/cep_scheduler.hpp"

namespace cfcep {

/// Normalized system parameters (powers already divided by the noise power).
struct SystemParams {
  double p_d = 1.0;
  double rho = 1.0;
  int tau = 200;
  int tau_c = 40;
  double bandwidth_hz = 20e6;
};

struct PowerAllocation {
  Eigen::MatrixXd eta;  // M x K
};

/// eta(m,k) = 1 / sum_k' E|gbar(m,k')|^2. Throws DomainError when an AP's row sum is not positive.
PowerAllocation equal_power(const Eigen::MatrixXd& gbar_second_moments);

/// Paired realizations (true channel, beamforming channel) of one window position, M x K each,
/// stored in single precision.
struct SampleSet {
  std::vector<Eigen::MatrixXcf> g;
  std::vector<Eigen::MatrixXcf> gbar;

  std::size_t size() const { return g.size(); }
  void append(const Eigen::MatrixXcd& true_channel, const Eigen::MatrixXcd& beam_channel);
  /// Sample mean of |gbar|^2 per link.
  Eigen::MatrixXd gbar_second_moments() const;
  /// Moves the samples of `other` to the end of this set.
  void splice(SampleSet&& other);
};

inline constexpr std::size_t kMinRealizations = 1000;

struct UserRates {
  Eigen::VectorXd rate;        // bits/s/Hz per user
  Eigen::VectorXd std_error;   // batch-means standard error per user
  Eigen::MatrixXd batch_rate;  // K x batches, rates on contiguous sub-blocks of the samples
  std::size_t realizations = 0;
  bool insufficient_samples = false;  // fewer than kMinRealizations
};

/// Monte-Carlo estimate of the downlink achievable rate of every user:
/// log2(1 + |D_k|^2 / (E|B_k|^2 + sum_{k' != k} E|U_kk'|^2 + 1)), where
/// D_k = sqrt(p_d) E[sum_m sqrt(eta_mk) g_mk conj(gbar_mk)], B_k is the fluctuation of that
/// sum around D_k, and U_kk' = sqrt(p_d) sum_m sqrt(eta_mk') g_mk conj(gbar_mk').
UserRates achievable_rate(const SampleSet& samples, double p_d, const PowerAllocation& power, int batches = 10);

/// bandwidth * overhead_factor * sum_rate.
double net_throughput(double sum_rate, Scheme scheme, const SystemParams& params, double alpha);

/// r_k = sum_m g_mk x_m + n_k with x_m = sqrt(p_d) sum_k sqrt(eta_mk) conj(gbar_mk) s_k.
/// `symbols` is K x S; returns K x S received samples with CN(0,1) noise from `seed`.
Eigen::MatrixXcd simulate_downlink(const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& gbar, const PowerAllocation& power,
                                   double p_d, const Eigen::MatrixXcd& symbols, std::uint64_t seed);

/// Splits a run into per-window-position sample sets. Windowed schemes contribute every full
/// window starting at or after the run's warmup; TDD / perfect runs have a single position
/// covering every CI.
void collect_samples(const ChannelRealization& channels, const AcquisitionRun& run, std::vector<SampleSet>& positions);

/// Rates of one scheme on one deployment, averaged uniformly over window positions.
struct SchemeRates {
  Scheme scheme = Scheme::Tdd;
  int e2p = 0;
  std::vector<UserRates> positions;
  Eigen::VectorXd user_rate;
  Eigen::VectorXd user_std_error;
  double sum_rate = 0.0;
  double sum_rate_std_error = 0.0;
  std::size_t realizations = 0;  // per window position (minimum over positions)
  bool insufficient_samples = false;
};

/// Equal power from each position's own gbar moments, then achievable_rate per position.
SchemeRates evaluate_scheme(Scheme scheme, int e2p, const std::vector<SampleSet>& positions, double p_d,
                            int batches = 10);

}  // namespace cfcep
