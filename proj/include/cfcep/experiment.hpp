#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "cfcep/config.hpp"
#include "cfcep/performance.hpp"
#include "cfcep/predictor.hpp"

namespace cfcep {

using LogFn = std::function<void(const std::string&)>;

/// One evaluated curve: a scheme and, for windowed schemes, its 1:N ratio (0 otherwise).
struct SchemeSpec {
  Scheme scheme = Scheme::Tdd;
  int e2p = 0;

  bool windowed() const { return scheme == Scheme::Cep || scheme == Scheme::Identity; }
  double alpha() const { return windowed() ? 1.0 / e2p : 1.0; }
  friend bool operator==(const SchemeSpec&, const SchemeSpec&) = default;
};

/// Windowed schemes expand to one entry per configured ratio, in config order.
std::vector<SchemeSpec> expand_schemes(const ExperimentConfig& cfg);

/// Thread-safe memo of fitted AR profiles and their trace generators, keyed by (f_n, Q).
class ProfileCache {
 public:
  std::shared_ptr<const TraceGenerator> get(double f_n, int order);

 private:
  std::mutex mutex_;
  std::map<std::pair<double, int>, std::shared_ptr<const TraceGenerator>> cache_;
};

struct SchemeResult {
  SchemeSpec spec;
  double overhead = 1.0;
  double sum_rate = 0.0;        // mean over deployments, bits/s/Hz
  double sum_rate_se = 0.0;
  double net_throughput = 0.0;  // bits/s
  double net_throughput_se = 0.0;
  std::size_t realizations = 0;  // per window position and deployment (minimum)
  bool insufficient_samples = false;
  std::vector<SchemeRates> deployments;
};

struct PointResult {
  std::vector<SchemeResult> schemes;
  std::vector<Deployment> deployments;
  int trace_sets = 0;  // per deployment
};

/// Number of L-CI trace sets per deployment needed so that every scheme gets at least
/// mc_realizations samples per window position. Throws ConfigError if L cannot hold one
/// full CEP window after warm-up.
int trace_sets_needed(const ExperimentConfig& cfg, const std::vector<SchemeSpec>& specs, int order_for_history);

/// Evaluates every configured scheme at the config's operating point.
///
/// Deployment d uses seed derive_seed(seed, {1, d}); trace set t of deployment d draws channels
/// from derive_seed(seed, {2, d, t}) and pilot noise from derive_seed(seed, {3, d, t}). All
/// schemes see the same channels and noise. Trace sets run on `threads` workers and are merged
/// in index order, so the result does not depend on the thread count.
PointResult evaluate_point(const ExperimentConfig& cfg, const ModelBank* bank, ProfileCache& profiles, int threads = 1,
                           const LogFn& log = {});

struct SweepResult {
  std::string variable;
  std::vector<double> grid;
  std::vector<PointResult> points;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// f_n on cfg.fn_grid with every user at that fixed value.
SweepResult sweep_doppler(const ExperimentConfig& cfg, const ModelBank* bank, int threads = 1, const LogFn& log = {});
/// K on cfg.users_grid; tau_c follows K unless fixed in the config.
SweepResult sweep_users(const ExperimentConfig& cfg, const ModelBank* bank, int threads = 1, const LogFn& log = {});
/// M on cfg.aps_grid.
SweepResult sweep_aps(const ExperimentConfig& cfg, const ModelBank* bank, int threads = 1, const LogFn& log = {});

/// Header `<variable>,scheme,N,sum_rate_bps_hz,net_throughput_bps,stderr,seed,config_hash`;
/// one row per (grid point, scheme) in grid order. stderr is that of the net throughput.
void write_sweep_csv(const SweepResult& sweep, std::ostream& out);

/// Per-user, per-window-position rates for every deployment, followed by one summary row per
/// scheme (deployment "all", user "sum").
void write_eval_csv(const ExperimentConfig& cfg, const PointResult& point, std::ostream& out);

/// Training-data settings for one band and ratio derived from the config.
TrainingDataSpec training_spec(const ExperimentConfig& cfg, int band, int e2p);

/// Loads the models needed by the configured CEP ratios from `dir`; empty bank if no CEP scheme.
ModelBank load_bank_for(const ExperimentConfig& cfg, const std::filesystem::path& dir);

}  // namespace cfcep
