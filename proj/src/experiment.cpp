#include "cfcep/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace cfcep {

std::vector<SchemeSpec> expand_schemes(const ExperimentConfig& cfg) {
  std::vector<SchemeSpec> out;
  for (Scheme s : cfg.schemes) {
    if (s == Scheme::Cep || s == Scheme::Identity) {
      for (int n : cfg.e2p) out.push_back({s, n});
    } else {
      out.push_back({s, 0});
    }
  }
  return out;
}

std::shared_ptr<const TraceGenerator> ProfileCache::get(double f_n, int order) {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& slot = cache_[{f_n, order}];
  if (!slot) slot = std::make_shared<const TraceGenerator>(fit_ar(f_n, order));
  return slot;
}

namespace {

int warmup_for(const SchemeSpec& s, int order) {
  return s.scheme == Scheme::Cep ? (history_depth(order, s.e2p) - 1) * (s.e2p + 1) : 0;
}

// Samples per window position contributed by one trace set.
int samples_per_trace(const SchemeSpec& s, int length, int order) {
  if (!s.windowed()) return length;
  return (length - warmup_for(s, order)) / (s.e2p + 1);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Runs `task(i)` for i in [0, n) on up to `threads` workers; rethrows the first failure.
void parallel_for(int n, int threads, const std::function<void(int)>& task) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

int trace_sets_needed(const ExperimentConfig& cfg, const std::vector<SchemeSpec>& specs, int order_for_history) {
  int per_trace = cfg.length;
  for (const auto& s : specs) {
    const int n = samples_per_trace(s, cfg.length, order_for_history);
    if (n < 1)
      throw ConfigError("L: " + std::to_string(cfg.length) + " CIs cannot hold a full " + scheme_name(s.scheme) +
                        " 1:" + std::to_string(s.e2p) + " window after the " +
                        std::to_string(warmup_for(s, order_for_history)) + "-CI warm-up");
    per_trace = std::min(per_trace, n);
  }
  return (cfg.mc_realizations + per_trace - 1) / per_trace;
}

PointResult evaluate_point(const ExperimentConfig& cfg, const ModelBank* bank, ProfileCache& profiles, int threads,
                           const LogFn& log) {
  cfg.validate();
  const auto specs = expand_schemes(cfg);
  const bool needs_bank = std::any_of(specs.begin(), specs.end(), [](const SchemeSpec& s) { return s.scheme == Scheme::Cep; });
  if (needs_bank && !bank) throw ConfigError("schemes: cep requires a trained model bank");
  std::unique_ptr<BankPredictor> predictor;
  if (needs_bank) predictor = std::make_unique<BankPredictor>(*bank, cfg.order);

  const SystemParams params{cfg.p_d(), cfg.rho(), cfg.tau, cfg.pilot_length(), cfg.bandwidth_hz};
  const PilotBook pilots = make_pilots(cfg.users, cfg.pilot_length());
  const int sets = trace_sets_needed(cfg, specs, cfg.order);

  PointResult point;
  point.trace_sets = sets;
  point.schemes.resize(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    point.schemes[s].spec = specs[s];
    point.schemes[s].overhead = overhead_factor(specs[s].scheme, specs[s].alpha(), params.tau_c, params.tau);
  }

  for (int d = 0; d < cfg.deployments; ++d) {
    const auto dd = static_cast<std::uint64_t>(d);
    Deployment dep = make_deployment(cfg.aps, cfg.users, cfg.area_side_m, cfg.doppler, derive_seed(cfg.seed, {1, dd}),
                                     cfg.large_scale);
    std::vector<std::shared_ptr<const TraceGenerator>> gens;
    std::vector<const TraceGenerator*> gen_ptrs;
    std::vector<AgingProfile> user_profiles;
    for (int k = 0; k < cfg.users; ++k) {
      gens.push_back(profiles.get(dep.doppler(k), cfg.order));
      gen_ptrs.push_back(gens.back().get());
      user_profiles.push_back(gens.back()->profile());
    }
    const LinkContext ctx = make_link_context(dep, user_profiles, pilots, params.rho);

    // per trace set, per scheme, per window position
    std::vector<std::vector<std::vector<SampleSet>>> parts(static_cast<std::size_t>(sets));
    parallel_for(sets, threads, [&](int t) {
      const auto tt = static_cast<std::uint64_t>(t);
      const ChannelRealization ch = realize_channels(dep, gen_ptrs, cfg.length, derive_seed(cfg.seed, {2, dd, tt}));
      const std::uint64_t noise = derive_seed(cfg.seed, {3, dd, tt});
      auto& mine = parts[static_cast<std::size_t>(t)];
      mine.resize(specs.size());
      for (std::size_t s = 0; s < specs.size(); ++s) {
        const auto& spec = specs[s];
        AcquisitionRun run;
        switch (spec.scheme) {
          case Scheme::Tdd: run = run_tdd(ch, ctx, noise); break;
          case Scheme::Perfect: run = run_perfect(ch); break;
          case Scheme::Identity: run = run_identity(ch, ctx, spec.e2p, noise); break;
          case Scheme::Cep: run = run_cep(ch, ctx, *predictor, spec.e2p, noise); break;
        }
        collect_samples(ch, run, mine[s]);
      }
    });

    for (std::size_t s = 0; s < specs.size(); ++s) {
      std::vector<SampleSet> merged;
      for (auto& part : parts) {
        auto& positions = part[s];
        merged.resize(positions.size());
        for (std::size_t p = 0; p < positions.size(); ++p) merged[p].splice(std::move(positions[p]));
      }
      if (cfg.predicted_only && specs[s].windowed()) merged.erase(merged.begin());
      point.schemes[s].deployments.push_back(
          evaluate_scheme(specs[s].scheme, specs[s].e2p, merged, params.p_d, cfg.batches));
    }
    if (log) {
      std::string msg = "deployment " + std::to_string(d + 1) + "/" + std::to_string(cfg.deployments) + ":";
      for (const auto& r : point.schemes) {
        const auto& last = r.deployments.back();
        msg += " " + scheme_name(r.spec.scheme) + (r.spec.e2p ? "1:" + std::to_string(r.spec.e2p) : "") + "=" +
               num(last.sum_rate);
      }
      log(msg);
    }
    point.deployments.push_back(std::move(dep));
  }

  const double nd = static_cast<double>(cfg.deployments);
  for (auto& r : point.schemes) {
    double var = 0.0;
    r.realizations = r.deployments.front().realizations;
    for (const auto& d : r.deployments) {
      r.sum_rate += d.sum_rate / nd;
      var += d.sum_rate_std_error * d.sum_rate_std_error / (nd * nd);
      r.realizations = std::min(r.realizations, d.realizations);
      r.insufficient_samples = r.insufficient_samples || d.insufficient_samples;
    }
    r.sum_rate_se = std::sqrt(var);
    r.net_throughput = net_throughput(r.sum_rate, r.spec.scheme, params, r.spec.alpha());
    r.net_throughput_se = params.bandwidth_hz * r.overhead * r.sum_rate_se;
    if (log && r.insufficient_samples)
      log("warning: " + scheme_name(r.spec.scheme) + " uses " + std::to_string(r.realizations) +
          " realizations per window position (fewer than " + std::to_string(kMinRealizations) +
          "); see the stderr column");
  }
  return point;
}

namespace {

template <class Apply>
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& variable, const std::vector<double>& grid,
                      const ModelBank* bank, int threads, const LogFn& log, Apply apply) {
  SweepResult out;
  out.variable = variable;
  out.grid = grid;
  out.seed = cfg.seed;
  out.config_hash = cfg.hash();
  ProfileCache profiles;
  for (double v : grid) {
    ExperimentConfig point_cfg = cfg;
    apply(point_cfg, v);
    if (log) log(variable + " = " + num(v));
    out.points.push_back(evaluate_point(point_cfg, bank, profiles, threads, log));
  }
  return out;
}

}  // namespace

SweepResult sweep_doppler(const ExperimentConfig& cfg, const ModelBank* bank, int threads, const LogFn& log) {
  return run_sweep(cfg, "f_n", cfg.fn_grid, bank, threads, log,
                   [](ExperimentConfig& c, double v) { c.doppler = DopplerSpec::fixed(v); });
}

SweepResult sweep_users(const ExperimentConfig& cfg, const ModelBank* bank, int threads, const LogFn& log) {
  return run_sweep(cfg, "K", std::vector<double>(cfg.users_grid.begin(), cfg.users_grid.end()), bank, threads, log,
                   [](ExperimentConfig& c, double v) { c.users = static_cast<int>(v); });
}

SweepResult sweep_aps(const ExperimentConfig& cfg, const ModelBank* bank, int threads, const LogFn& log) {
  return run_sweep(cfg, "M", std::vector<double>(cfg.aps_grid.begin(), cfg.aps_grid.end()), bank, threads, log,
                   [](ExperimentConfig& c, double v) { c.aps = static_cast<int>(v); });
}

void write_sweep_csv(const SweepResult& sweep, std::ostream& out) {
  out << sweep.variable << ",scheme,N,sum_rate_bps_hz,net_throughput_bps,stderr,seed,config_hash\n";
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    for (const auto& r : sweep.points[i].schemes) {
      out << num(sweep.grid[i]) << ',' << scheme_name(r.spec.scheme) << ',' << r.spec.e2p << ',' << num(r.sum_rate)
          << ',' << num(r.net_throughput) << ',' << num(r.net_throughput_se) << ',' << sweep.seed << ','
          << sweep.config_hash << '\n';
    }
  }
}

void write_eval_csv(const ExperimentConfig& cfg, const PointResult& point, std::ostream& out) {
  const std::string tail = "," + std::to_string(cfg.seed) + "," + cfg.hash() + "\n";
  out << "deployment,user,position,scheme,N,f_n,rate_bps_hz,net_throughput_bps,stderr,realizations,seed,config_hash\n";
  for (const auto& r : point.schemes) {
    const std::string head = scheme_name(r.spec.scheme) + "," + std::to_string(r.spec.e2p) + ",";
    for (std::size_t d = 0; d < r.deployments.size(); ++d) {
      const auto& rates = r.deployments[d];
      const auto& dep = point.deployments[d];
      const int first_pos = cfg.predicted_only && r.spec.windowed() ? 1 : 0;
      for (Eigen::Index k = 0; k < rates.user_rate.size(); ++k) {
        const std::string who = std::to_string(d) + "," + std::to_string(k) + ",";
        for (std::size_t p = 0; p < rates.positions.size(); ++p) {
          const auto& pos = rates.positions[p];
          out << who << (first_pos + static_cast<int>(p)) << ',' << head << num(dep.doppler(k)) << ','
              << num(pos.rate(k)) << ",," << num(pos.std_error(k)) << ',' << pos.realizations << tail;
        }
        out << who << "avg," << head << num(dep.doppler(k)) << ',' << num(rates.user_rate(k)) << ",,"
            << num(rates.user_std_error(k)) << ',' << rates.realizations << tail;
      }
    }
    out << "all,sum,avg," << head << ',' << num(r.sum_rate) << ',' << num(r.net_throughput) << ','
        << num(r.sum_rate_se) << ',' << r.realizations << tail;
  }
}

TrainingDataSpec training_spec(const ExperimentConfig& cfg, int band, int e2p) {
  if (band < 0 || band >= static_cast<int>(default_bands().size()))
    throw ConfigError("band must be between 1 and " + std::to_string(default_bands().size()));
  TrainingDataSpec spec;
  spec.band = default_bands()[static_cast<std::size_t>(band)];
  spec.e2p = e2p;
  spec.order = cfg.order;
  spec.n_traces = cfg.train_traces;
  spec.trace_len = cfg.length;
  spec.rho = std::pow(10.0, cfg.train_snr_db / 10.0);
  spec.tau_c = 1;
  spec.rho_spread_db = cfg.train_snr_spread_db;
  spec.seed = derive_seed(cfg.seed, {100, static_cast<std::uint64_t>(band), static_cast<std::uint64_t>(e2p)});
  return spec;
}

ModelBank load_bank_for(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const bool needs = std::find(cfg.schemes.begin(), cfg.schemes.end(), Scheme::Cep) != cfg.schemes.end();
  if (!needs) return {};
  if (!std::filesystem::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  ModelBank bank = ModelBank::load_directory(dir, cfg.e2p);
  for (int n : cfg.e2p)
    for (int b = 0; b < static_cast<int>(default_bands().size()); ++b)
      if (bank.contains(b, n) && bank.at(b, n).order != cfg.order)
        throw ConfigError("Q: model " + model_filename(b, n) + " was trained for Q = " +
                          std::to_string(bank.at(b, n).order));
  return bank;
}

}  // namespace cfcep
