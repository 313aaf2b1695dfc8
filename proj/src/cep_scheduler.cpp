#include "cfcep/cep_scheduler.hpp"

#include <cmath>
#include <map>

namespace cfcep {

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Tdd: return "tdd";
    case Scheme::Cep: return "cep";
    case Scheme::Identity: return "identity";
    case Scheme::Perfect: return "perfect";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "tdd") return Scheme::Tdd;
  if (name == "cep") return Scheme::Cep;
  if (name == "identity") return Scheme::Identity;
  if (name == "perfect") return Scheme::Perfect;
  throw ConfigError("unknown scheme '" + name + "' (expected tdd, cep, identity or perfect)");
}

Schedule make_schedule(int e2p) {
  if (e2p < 1) throw DomainError("make_schedule: N must be >= 1");
  return Schedule{e2p};
}

ChannelRealization realize_channels(const Deployment& dep, std::span<const TraceGenerator* const> user_generators,
                                    int length, std::uint64_t seed) {
  const int m_count = dep.aps();
  const int k_count = dep.users();
  if (static_cast<int>(user_generators.size()) != k_count)
    throw DimensionError("realize_channels: need one trace generator per user");
  ChannelRealization out;
  out.g.assign(static_cast<std::size_t>(length), Eigen::MatrixXcd(m_count, k_count));
  Eigen::MatrixXcd h(length, m_count);
  for (int k = 0; k < k_count; ++k) {
    h = user_generators[static_cast<std::size_t>(k)]->generate(m_count, length,
                                                                 derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    for (int m = 0; m < m_count; ++m) {
      const double amp = std::sqrt(dep.beta(m, k));
      for (int l = 0; l < length; ++l) out.g[static_cast<std::size_t>(l)](m, k) = amp * h(l, m);
    }
  }
  return out;
}

LinkContext make_link_context(const Deployment& dep, std::span<const AgingProfile> user_profiles,
                              const PilotBook& pilots, double rho) {
  const int m_count = dep.aps();
  const int k_count = dep.users();
  if (static_cast<int>(user_profiles.size()) != k_count)
    throw DimensionError("make_link_context: need one aging profile per user");
  if (pilots.users() != k_count) throw DimensionError("make_link_context: pilot book size differs from K");
  LinkContext ctx;
  ctx.beta = dep.beta;
  ctx.doppler = dep.doppler;
  ctx.pilots = pilots;
  ctx.rho = rho;
  ctx.est_coeff.resize(m_count, k_count);
  ctx.gamma.resize(m_count, k_count);
  ctx.a1.resize(k_count);
  ctx.sigma2_h.resize(k_count);
  for (int k = 0; k < k_count; ++k) {
    const auto& p = user_profiles[static_cast<std::size_t>(k)];
    ctx.a1(k) = p.coeffs(0);
    ctx.sigma2_h(k) = p.stationary_var;
    for (int m = 0; m < m_count; ++m) {
      const auto s = link_stats(dep.beta(m, k), p.stationary_var, rho, pilots.tau_c);
      ctx.est_coeff(m, k) = s.est_coeff;
      ctx.gamma(m, k) = s.gamma;
    }
  }
  return ctx;
}

Eigen::MatrixXcd BankPredictor::predict(int e2p, std::span<const Query> queries, const Eigen::MatrixXcd& histories,
                                        const LinkContext& ctx) const {
  const int depth = history_depth(e2p);
  if (histories.rows() < depth) throw WarmupError("BankPredictor: history shorter than model lookback");
  Eigen::MatrixXcd out(e2p, static_cast<Eigen::Index>(queries.size()));

  // group query columns by band so each model runs one batched pass
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double f_n = ctx.doppler(queries[i].user);
    select_model(bank_, f_n, e2p);
    groups[band_index(f_n)].push_back(static_cast<Eigen::Index>(i));
  }

  constexpr Eigen::Index kChunk = 4096;
  std::vector<cplx> hist(static_cast<std::size_t>(depth));
  for (const auto& [band, cols] : groups) {
    const Mlp<float>& net = bank_.fast(band, e2p);
    for (std::size_t start = 0; start < cols.size(); start += kChunk) {
      const std::size_t stop = std::min(cols.size(), start + static_cast<std::size_t>(kChunk));
      Eigen::MatrixXd x(feature_dim(order_, e2p), static_cast<Eigen::Index>(stop - start));
      for (std::size_t j = start; j < stop; ++j) {
        const auto& q = queries[static_cast<std::size_t>(cols[j])];
        const double inv = 1.0 / std::sqrt(ctx.beta(q.ap, q.user));
        for (int i = 0; i < depth; ++i) hist[static_cast<std::size_t>(i)] = histories(i, cols[j]) * inv;
        build_features_into(hist, ctx.a1(q.user), depth, x, static_cast<Eigen::Index>(j - start));
      }
      const Eigen::MatrixXd y = net.forward(x.cast<float>()).cast<double>();
      const Eigen::MatrixXcd paired = pair_outputs(y);
      for (std::size_t j = start; j < stop; ++j) {
        const auto& q = queries[static_cast<std::size_t>(cols[j])];
        out.col(cols[j]) = paired.col(static_cast<Eigen::Index>(j - start)) * std::sqrt(ctx.beta(q.ap, q.user));
      }
    }
  }
  return out;
}

namespace {

Eigen::MatrixXcd estimate_at(const ChannelRealization& channels, const LinkContext& ctx, int ci,
                             std::uint64_t noise_seed) {
  const auto obs = receive_pilots(channels.g[static_cast<std::size_t>(ci)], ctx.pilots, ctx.rho,
                                  derive_seed(noise_seed, {static_cast<std::uint64_t>(ci)}));
  return mmse_estimate(obs.y_bar, ctx.est_coeff);
}

// Shared skeleton of the windowed schemes; `use_predictor` false gives identity mapping.
AcquisitionRun run_windowed(Scheme scheme, const ChannelRealization& channels, const LinkContext& ctx,
                            const ChannelPredictor* predictor, int e2p, std::uint64_t noise_seed) {
  const Schedule sched = make_schedule(e2p);
  const int length = channels.length();
  const int m_count = channels.aps();
  const int k_count = channels.users();
  AcquisitionRun run;
  run.scheme = scheme;
  run.e2p = e2p;
  run.roles.resize(static_cast<std::size_t>(length));
  run.gbar.assign(static_cast<std::size_t>(length), Eigen::MatrixXcd());
  run.pilot_transmissions = sched.pilot_count(length);

  const int depth = predictor ? predictor->history_depth(e2p) : 1;
  run.warmup_cis = predictor ? (depth - 1) * sched.window_len() : 0;

  std::vector<ChannelPredictor::Query> queries;
  if (predictor) {
    queries.reserve(static_cast<std::size_t>(m_count * k_count));
    for (int k = 0; k < k_count; ++k)
      for (int m = 0; m < m_count; ++m) queries.push_back({m, k, 0});
  }

  std::vector<Eigen::MatrixXcd> estimates;  // ET-CI estimates in time order
  Eigen::MatrixXcd histories;
  for (int l = 0; l < length; ++l) {
    run.roles[static_cast<std::size_t>(l)] = sched.role(l);
    if (sched.role(l) != CiRole::Estimate) continue;
    Eigen::MatrixXcd est = estimate_at(channels, ctx, l, noise_seed);
    estimates.push_back(est);
    const int last_pt = std::min(length - 1, l + e2p);
    const bool predict = predictor && static_cast<int>(estimates.size()) >= depth && last_pt > l;
    if (predict) {
      histories.resize(depth, m_count * k_count);
      const std::size_t newest = estimates.size() - 1;
      for (int i = 0; i < depth; ++i) {
        const Eigen::MatrixXcd& e = estimates[newest - static_cast<std::size_t>(i)];
        histories.row(i) = Eigen::Map<const Eigen::RowVectorXcd>(e.data(), e.size());
      }
      for (auto& q : queries) q.et_ci = l;
      const Eigen::MatrixXcd pred = predictor->predict(e2p, queries, histories, ctx);
      for (int d = 1; l + d <= last_pt; ++d) {
        Eigen::MatrixXcd slot(m_count, k_count);
        Eigen::Map<Eigen::RowVectorXcd>(slot.data(), slot.size()) = pred.row(d - 1);
        run.gbar[static_cast<std::size_t>(l + d)] = std::move(slot);
      }
    } else {
      for (int d = 1; l + d <= last_pt; ++d) run.gbar[static_cast<std::size_t>(l + d)] = est;
    }
    run.gbar[static_cast<std::size_t>(l)] = std::move(est);
  }
  return run;
}

}  // namespace

AcquisitionRun run_cep(const ChannelRealization& channels, const LinkContext& ctx, const ChannelPredictor& predictor,
                       int e2p, std::uint64_t noise_seed) {
  return run_windowed(Scheme::Cep, channels, ctx, &predictor, e2p, noise_seed);
}

AcquisitionRun run_identity(const ChannelRealization& channels, const LinkContext& ctx, int e2p,
                            std::uint64_t noise_seed) {
  return run_windowed(Scheme::Identity, channels, ctx, nullptr, e2p, noise_seed);
}

AcquisitionRun run_tdd(const ChannelRealization& channels, const LinkContext& ctx, std::uint64_t noise_seed) {
  AcquisitionRun run;
  run.scheme = Scheme::Tdd;
  run.roles.assign(static_cast<std::size_t>(channels.length()), CiRole::Estimate);
  run.pilot_transmissions = channels.length();
  run.gbar.reserve(static_cast<std::size_t>(channels.length()));
  for (int l = 0; l < channels.length(); ++l) run.gbar.push_back(estimate_at(channels, ctx, l, noise_seed));
  return run;
}

AcquisitionRun run_perfect(const ChannelRealization& channels) {
  AcquisitionRun run;
  run.scheme = Scheme::Perfect;
  run.roles.assign(static_cast<std::size_t>(channels.length()), CiRole::Estimate);
  run.gbar = channels.g;
  return run;
}

double overhead_factor(Scheme scheme, double alpha, int tau_c, int tau) {
  if (tau <= 0 || tau_c <= 0) throw DomainError("overhead_factor: tau and tau_c must be positive");
  if (tau_c > tau) throw DomainError("overhead_factor: pilot length exceeds the coherence interval");
  switch (scheme) {
    case Scheme::Tdd: return 1.0 - static_cast<double>(tau_c) / tau;
    case Scheme::Cep:
    case Scheme::Identity:
      if (!(alpha > 0.0)) throw DomainError("overhead_factor: alpha must be positive");
      return 1.0 - alpha * tau_c / ((1.0 + alpha) * tau);
    case Scheme::Perfect: return 1.0;
  }
  return 1.0;
}

}  // namespace cfcep
