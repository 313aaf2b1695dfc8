#include "cfcep/performance.hpp"

#include <algorithm>
#include <cmath>

namespace cfcep {

PowerAllocation equal_power(const Eigen::MatrixXd& gbar_second_moments) {
  if ((gbar_second_moments.array() < 0.0).any())
    throw DomainError("equal_power: second moments must be non-negative");
  PowerAllocation p;
  p.eta.resize(gbar_second_moments.rows(), gbar_second_moments.cols());
  for (Eigen::Index m = 0; m < gbar_second_moments.rows(); ++m) {
    const double total = gbar_second_moments.row(m).sum();
    if (!(total > 0.0)) throw DomainError("equal_power: AP " + std::to_string(m) + " has zero total channel power");
    p.eta.row(m).setConstant(1.0 / total);
  }
  return p;
}

void SampleSet::append(const Eigen::MatrixXcd& true_channel, const Eigen::MatrixXcd& beam_channel) {
  g.push_back(true_channel.cast<std::complex<float>>());
  gbar.push_back(beam_channel.cast<std::complex<float>>());
}

void SampleSet::splice(SampleSet&& other) {
  for (auto& m : other.g) g.push_back(std::move(m));
  for (auto& m : other.gbar) gbar.push_back(std::move(m));
  other.g.clear();
  other.gbar.clear();
}

Eigen::MatrixXd SampleSet::gbar_second_moments() const {
  if (gbar.empty()) throw DomainError("SampleSet: no realizations");
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(gbar.front().rows(), gbar.front().cols());
  for (const auto& b : gbar) acc += b.cast<cplx>().cwiseAbs2();
  return acc / static_cast<double>(gbar.size());
}

namespace {

struct RateAccumulator {
  Eigen::VectorXcd sum_s;
  Eigen::VectorXd sum_s2;
  Eigen::VectorXd sum_interference;
  std::size_t n = 0;

  explicit RateAccumulator(Eigen::Index k)
      : sum_s(Eigen::VectorXcd::Zero(k)), sum_s2(Eigen::VectorXd::Zero(k)), sum_interference(Eigen::VectorXd::Zero(k)) {}

  Eigen::VectorXd rates(double p_d) const {
    const double inv = 1.0 / static_cast<double>(n);
    const Eigen::VectorXcd mean_s = sum_s * inv;
    Eigen::VectorXd r(mean_s.size());
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      const double desired = p_d * std::norm(mean_s(k));
      const double fluct = std::max(0.0, p_d * (sum_s2(k) * inv - std::norm(mean_s(k))));
      const double interference = p_d * sum_interference(k) * inv;
      r(k) = std::log2(1.0 + desired / (fluct + interference + 1.0));
    }
    return r;
  }
};

}  // namespace

UserRates achievable_rate(const SampleSet& samples, double p_d, const PowerAllocation& power, int batches) {
  const std::size_t n = samples.size();
  if (n == 0) throw DomainError("achievable_rate: no realizations");
  if (p_d < 0.0) throw DomainError("achievable_rate: negative downlink power");
  const Eigen::Index k_count = samples.g.front().cols();
  const Eigen::MatrixXd sqrt_eta = power.eta.cwiseSqrt();
  if (sqrt_eta.rows() != samples.g.front().rows() || sqrt_eta.cols() != k_count)
    throw DimensionError("achievable_rate: power allocation shape differs from channel shape");

  const int nb = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(batches, 2)), n));
  RateAccumulator total(k_count);
  std::vector<RateAccumulator> per_batch(static_cast<std::size_t>(nb), RateAccumulator(k_count));

  const Eigen::MatrixXcd sqrt_eta_c = sqrt_eta.cast<cplx>();
  Eigen::MatrixXcd beam, cross;
  for (std::size_t r = 0; r < n; ++r) {
    beam = samples.gbar[r].cast<cplx>().conjugate().cwiseProduct(sqrt_eta_c);
    cross.noalias() = samples.g[r].cast<cplx>().transpose() * beam;  // (k, k') = sum_m g_mk sqrt(eta_mk') conj(gbar_mk')
    auto& b = per_batch[std::min<std::size_t>(r * static_cast<std::size_t>(nb) / n, static_cast<std::size_t>(nb - 1))];
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const cplx s = cross(k, k);
      const double row = cross.row(k).squaredNorm() - std::norm(s);
      for (RateAccumulator* a : {&total, &b}) {
        a->sum_s(k) += s;
        a->sum_s2(k) += std::norm(s);
        a->sum_interference(k) += row;
      }
    }
    ++total.n;
    ++b.n;
  }

  UserRates out;
  out.realizations = n;
  out.insufficient_samples = n < kMinRealizations;
  out.rate = total.rates(p_d);
  out.batch_rate.resize(k_count, nb);
  for (int b = 0; b < nb; ++b) out.batch_rate.col(b) = per_batch[static_cast<std::size_t>(b)].rates(p_d);
  const Eigen::VectorXd mean_b = out.batch_rate.rowwise().mean();
  out.std_error = ((out.batch_rate.colwise() - mean_b).array().square().rowwise().sum() / (nb - 1) / nb).sqrt().matrix();
  return out;
}

double net_throughput(double sum_rate, Scheme scheme, const SystemParams& params, double alpha) {
  if (sum_rate < 0.0) throw DomainError("net_throughput: negative sum rate");
  return params.bandwidth_hz * overhead_factor(scheme, alpha, params.tau_c, params.tau) * sum_rate;
}

Eigen::MatrixXcd simulate_downlink(const Eigen::MatrixXcd& g, const Eigen::MatrixXcd& gbar, const PowerAllocation& power,
                                   double p_d, const Eigen::MatrixXcd& symbols, std::uint64_t seed) {
  if (g.rows() != gbar.rows() || g.cols() != gbar.cols() || symbols.rows() != g.cols())
    throw DimensionError("simulate_downlink: inconsistent shapes");
  const Eigen::MatrixXcd precoder = std::sqrt(p_d) * gbar.conjugate().cwiseProduct(power.eta.cwiseSqrt().cast<cplx>());
  const Eigen::MatrixXcd x = precoder * symbols;  // M x S
  Eigen::MatrixXcd r = g.transpose() * x;          // K x S
  Rng rng(seed);
  for (Eigen::Index s = 0; s < r.cols(); ++s)
    for (Eigen::Index k = 0; k < r.rows(); ++k) r(k, s) += complex_gaussian(rng, 1.0);
  return r;
}

void collect_samples(const ChannelRealization& channels, const AcquisitionRun& run, std::vector<SampleSet>& positions) {
  const int length = channels.length();
  if (run.scheme == Scheme::Tdd || run.scheme == Scheme::Perfect) {
    positions.resize(1);
    for (int l = 0; l < length; ++l)
      positions[0].append(channels.g[static_cast<std::size_t>(l)], run.gbar[static_cast<std::size_t>(l)]);
    return;
  }
  const int w = run.e2p + 1;
  positions.resize(static_cast<std::size_t>(w));
  for (int start = run.warmup_cis; start + w <= length; start += w)
    for (int p = 0; p < w; ++p)
      positions[static_cast<std::size_t>(p)].append(channels.g[static_cast<std::size_t>(start + p)],
                                                    run.gbar[static_cast<std::size_t>(start + p)]);
}

SchemeRates evaluate_scheme(Scheme scheme, int e2p, const std::vector<SampleSet>& positions, double p_d, int batches) {
  if (positions.empty()) throw DomainError("evaluate_scheme: no window positions");
  SchemeRates out;
  out.scheme = scheme;
  out.e2p = e2p;
  out.realizations = positions.front().size();
  for (const auto& set : positions) {
    out.positions.push_back(achievable_rate(set, p_d, equal_power(set.gbar_second_moments()), batches));
    out.realizations = std::min(out.realizations, set.size());
    out.insufficient_samples = out.insufficient_samples || out.positions.back().insufficient_samples;
  }
  const double np = static_cast<double>(out.positions.size());
  const Eigen::Index k_count = out.positions.front().rate.size();
  out.user_rate = Eigen::VectorXd::Zero(k_count);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(k_count);
  Eigen::Index nb = out.positions.front().batch_rate.cols();
  for (const auto& p : out.positions) nb = std::min(nb, p.batch_rate.cols());
  Eigen::VectorXd batch_sum = Eigen::VectorXd::Zero(nb);
  for (const auto& p : out.positions) {
    out.user_rate += p.rate / np;
    var += p.std_error.cwiseAbs2() / (np * np);
    batch_sum += p.batch_rate.leftCols(nb).colwise().sum().transpose() / np;
  }
  out.user_std_error = var.cwiseSqrt();
  out.sum_rate = out.user_rate.sum();
  const double mb = batch_sum.mean();
  out.sum_rate_std_error =
      nb > 1 ? std::sqrt((batch_sum.array() - mb).square().sum() / static_cast<double>((nb - 1) * nb)) : 0.0;
  return out;
}

}  // namespace cfcep
