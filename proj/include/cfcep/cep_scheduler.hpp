#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfcep/channel_model.hpp"
#include "cfcep/pilot_estimation.hpp"
#include "cfcep/predictor.hpp"

namespace cfcep {

enum class Scheme { Tdd, Cep, Identity, Perfect };

std::string scheme_name(Scheme s);
/// Accepts "tdd", "cep", "identity", "perfect". Throws ConfigError otherwise.
Scheme parse_scheme(const std::string& name);

enum class CiRole { Estimate, Predict };

/// 1:N estimate-to-predict schedule: CI l is an ET CI iff l mod (N+1) == 0.
struct Schedule {
  int e2p = 1;

  int window_len() const { return e2p + 1; }
  double alpha() const { return 1.0 / e2p; }
  CiRole role(long ci) const { return ci % window_len() == 0 ? CiRole::Estimate : CiRole::Predict; }
  /// ceil(L / (N+1)) pilot transmissions over L CIs.
  long pilot_count(long length) const { return (length + window_len() - 1) / window_len(); }
};

Schedule make_schedule(int e2p);

/// True channels g(m,k) for every CI; g[l] is M x K.
struct ChannelRealization {
  std::vector<Eigen::MatrixXcd> g;

  int length() const { return static_cast<int>(g.size()); }
  int aps() const { return g.empty() ? 0 : static_cast<int>(g.front().rows()); }
  int users() const { return g.empty() ? 0 : static_cast<int>(g.front().cols()); }
};

/// Combines per-user small-scale traces with the deployment's large-scale gains:
/// g(m,k)[l] = sqrt(beta(m,k)) h(m,k)[l]. User k's links use stream derive_seed(seed, {k}).
ChannelRealization realize_channels(const Deployment& dep, std::span<const TraceGenerator* const> user_generators,
                                    int length, std::uint64_t seed);

/// Per-link quantities known locally at each AP.
struct LinkContext {
  Eigen::MatrixXd beta;       // M x K
  Eigen::MatrixXd est_coeff;  // M x K MMSE gains
  Eigen::MatrixXd gamma;      // M x K estimate variances
  Eigen::VectorXd doppler;    // K
  Eigen::VectorXd a1;         // K, first AR coefficient of each user's fit
  Eigen::VectorXd sigma2_h;   // K
  PilotBook pilots;
  double rho = 0.0;
};

LinkContext make_link_context(const Deployment& dep, std::span<const AgingProfile> user_profiles,
                              const PilotBook& pilots, double rho);

/// Produces PT-CI channels for a batch of links from their ET-CI estimate histories.
class ChannelPredictor {
 public:
  struct Query {
    int ap = 0;
    int user = 0;
    int et_ci = 0;
  };

  virtual ~ChannelPredictor() = default;
  virtual int history_depth(int e2p) const = 0;
  /// `histories` is depth x n (most recent first, raw estimates); returns N x n raw channels
  /// for CIs et_ci+1 .. et_ci+N.
  virtual Eigen::MatrixXcd predict(int e2p, std::span<const Query> queries, const Eigen::MatrixXcd& histories,
                                   const LinkContext& ctx) const = 0;
};

/// Serves the band models of a ModelBank. Estimates are scaled by 1/sqrt(beta) into the
/// unit-gain domain the models were trained in, and predictions scaled back.
class BankPredictor final : public ChannelPredictor {
 public:
  BankPredictor(const ModelBank& bank, int order) : bank_(bank), order_(order) {}
  int history_depth(int e2p) const override { return cfcep::history_depth(order_, e2p); }
  Eigen::MatrixXcd predict(int e2p, std::span<const Query> queries, const Eigen::MatrixXcd& histories,
                           const LinkContext& ctx) const override;

 private:
  const ModelBank& bank_;
  int order_;
};

struct AcquisitionRun {
  Scheme scheme = Scheme::Tdd;
  int e2p = 0;  // 0 for TDD / perfect
  std::vector<CiRole> roles;
  std::vector<Eigen::MatrixXcd> gbar;  // beamforming channel per CI
  int warmup_cis = 0;                  // CIs before the first full-history window
  long pilot_transmissions = 0;
};

/// Pilot noise at CI l is drawn from derive_seed(noise_seed, {l}) in every scheme, so ET-CI
/// estimates coincide across schemes sharing a noise seed.
AcquisitionRun run_cep(const ChannelRealization& channels, const LinkContext& ctx, const ChannelPredictor& predictor,
                       int e2p, std::uint64_t noise_seed);
AcquisitionRun run_identity(const ChannelRealization& channels, const LinkContext& ctx, int e2p,
                            std::uint64_t noise_seed);
AcquisitionRun run_tdd(const ChannelRealization& channels, const LinkContext& ctx, std::uint64_t noise_seed);
/// Genie baseline: gbar = g at every CI, no pilots.
AcquisitionRun run_perfect(const ChannelRealization& channels);

/// 1 - alpha tau_c / ((1 + alpha) tau) for CEP / identity, 1 - tau_c / tau for TDD, 1 for perfect CSI.
double overhead_factor(Scheme scheme, double alpha, int tau_c, int tau);

}  // namespace cfcep
