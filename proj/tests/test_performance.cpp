#include <doctest.h>

#include <cmath>

#include "cfcep/performance.hpp"

using namespace cfcep;

namespace {

// Synthetic Rayleigh channels with MMSE-like beams gbar = c*(g + e).
SampleSet synthetic(int m, int k, int n, double err_var, std::uint64_t seed, const Eigen::MatrixXd& beta) {
  Rng rng(seed);
  SampleSet s;
  Eigen::MatrixXcd g(m, k), b(m, k);
  for (int r = 0; r < n; ++r) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) {
        g(i, j) = complex_gaussian(rng, beta(i, j));
        b(i, j) = g(i, j) + complex_gaussian(rng, err_var * beta(i, j));
      }
    s.append(g, b);
  }
  return s;
}

Eigen::MatrixXd random_beta(int m, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 0.0);
  Eigen::MatrixXd beta(m, k);
  for (Eigen::Index i = 0; i < beta.size(); ++i) beta(i) = std::pow(10.0, u(rng));
  return beta;
}

}  // namespace

TEST_CASE("equal power allocation") {
  Eigen::MatrixXd one(1, 1);
  one << 2.0;
  CHECK(equal_power(one).eta(0, 0) == 0.5);

  const Eigen::MatrixXd moments = random_beta(5, 4, 1);
  const PowerAllocation p = equal_power(moments);
  for (int m = 0; m < 5; ++m) {
    CHECK(p.eta.row(m).cwiseProduct(moments.row(m)).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.eta(m, 0) == p.eta(m, 3));
  }
  Eigen::MatrixXd dead = moments;
  dead.row(2).setZero();
  CHECK_THROWS_AS(equal_power(dead), DomainError);
}

TEST_CASE("empirical beam moments converge to gamma") {
  const Eigen::MatrixXd beta = random_beta(3, 2, 2);
  // gbar = g + e has second moment beta*(1 + err)
  const SampleSet s = synthetic(3, 2, 20000, 0.25, 3, beta);
  const Eigen::MatrixXd mom = s.gbar_second_moments();
  for (Eigen::Index i = 0; i < beta.size(); ++i) CHECK(mom(i) == doctest::Approx(1.25 * beta(i)).epsilon(0.04));
}

TEST_CASE("net throughput") {
  SystemParams p;
  p.tau = 200;
  p.tau_c = 40;
  p.bandwidth_hz = 20e6;
  CHECK(net_throughput(10.0, Scheme::Tdd, p, 1.0) == doctest::Approx(160e6));
  CHECK(net_throughput(10.0, Scheme::Cep, p, 1.0) == doctest::Approx(180e6));
  CHECK(net_throughput(0.0, Scheme::Cep, p, 0.5) == 0.0);
  CHECK(net_throughput(3.7, Scheme::Cep, p, 0.5) ==
        doctest::Approx(p.bandwidth_hz * overhead_factor(Scheme::Cep, 0.5, 40, 200) * 3.7).epsilon(1e-15));
  CHECK_THROWS_AS(net_throughput(-1.0, Scheme::Tdd, p, 1.0), DomainError);
}

TEST_CASE("rate edge cases") {
  const Eigen::MatrixXd beta = random_beta(4, 3, 5);
  const SampleSet s = synthetic(4, 3, 200, 0.1, 6, beta);
  const PowerAllocation p = equal_power(s.gbar_second_moments());
  const UserRates zero = achievable_rate(s, 0.0, p);
  CHECK(zero.rate.isZero());

  // deterministic channel, perfect beam, single link: no fluctuation, no interference
  SampleSet det;
  const cplx c(0.6, -0.3);
  for (int i = 0; i < 50; ++i) det.append(Eigen::MatrixXcd::Constant(1, 1, c), Eigen::MatrixXcd::Constant(1, 1, c));
  const PowerAllocation eta = equal_power(det.gbar_second_moments());
  const double p_d = 40.0;
  const UserRates r = achievable_rate(det, p_d, eta);
  CHECK(r.rate(0) == doctest::Approx(std::log2(1.0 + p_d * eta.eta(0, 0) * std::pow(std::norm(c), 2))).epsilon(1e-6));
  CHECK(r.std_error(0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.insufficient_samples);
  CHECK(r.realizations == 50);

  CHECK_THROWS_AS(achievable_rate(SampleSet{}, 1.0, p), DomainError);
  CHECK_THROWS_AS(achievable_rate(s, 1.0, equal_power(Eigen::MatrixXd::Ones(2, 3))), DimensionError);
}

TEST_CASE("independent beams carry no coherent gain") {
  Rng rng(4);
  SampleSet s;
  Eigen::MatrixXcd g(8, 2), b(8, 2);
  for (int r = 0; r < 20000; ++r) {
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      g(i) = complex_gaussian(rng, 1.0);
      b(i) = complex_gaussian(rng, 1.0);
    }
    s.append(g, b);
  }
  const UserRates r = achievable_rate(s, 100.0, equal_power(s.gbar_second_moments()));
  CHECK(r.rate.maxCoeff() < 0.01);
}

TEST_CASE("rate is non-decreasing in downlink power") {
  const Eigen::MatrixXd beta = random_beta(6, 3, 7);
  const SampleSet s = synthetic(6, 3, 500, 0.3, 8, beta);
  const PowerAllocation p = equal_power(s.gbar_second_moments());
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(3);
  for (double p_d : {0.0, 0.1, 1.0, 10.0, 100.0, 1e4, 1e6}) {
    const UserRates r = achievable_rate(s, p_d, p);
    for (int k = 0; k < 3; ++k) CHECK(r.rate(k) >= prev(k) - 1e-12);
    prev = r.rate;
  }
}

TEST_CASE("perfect CSI dominates estimated CSI") {
  const Eigen::MatrixXd beta = random_beta(16, 4, 9);
  const SampleSet noisy = synthetic(16, 4, 2000, 0.5, 10, beta);
  SampleSet perfect;
  for (std::size_t r = 0; r < noisy.size(); ++r) perfect.append(noisy.g[r].cast<cplx>(), noisy.g[r].cast<cplx>());
  const double p_d = 1e3;
  const UserRates a = achievable_rate(perfect, p_d, equal_power(perfect.gbar_second_moments()));
  const UserRates b = achievable_rate(noisy, p_d, equal_power(noisy.gbar_second_moments()));
  for (int k = 0; k < 4; ++k) CHECK(a.rate(k) >= b.rate(k) - 2.0 * (a.std_error(k) + b.std_error(k)));
}

TEST_CASE("doubling the sample count stays within the reported error") {
  const Eigen::MatrixXd beta = random_beta(12, 3, 11);
  const SampleSet big = synthetic(12, 3, 4000, 0.4, 12, beta);
  SampleSet half;
  for (std::size_t r = 0; r < 2000; ++r) half.append(big.g[r].cast<cplx>(), big.gbar[r].cast<cplx>());
  // fixed power allocation isolates the sampling error of the rate estimate
  const PowerAllocation p = equal_power(beta * 1.4);
  const UserRates a = achievable_rate(half, 50.0, p);
  const UserRates b = achievable_rate(big, 50.0, p);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::isfinite(a.std_error(k)));
    CHECK(a.std_error(k) > 0.0);
    CHECK(std::abs(a.rate(k) - b.rate(k)) < 3.0 * a.std_error(k));
  }
  CHECK_FALSE(b.insufficient_samples);
  CHECK(b.batch_rate.cols() == 10);
}

// Symbol-level oracle: measured SINR of the synthesized downlink matches the rate formula.
TEST_CASE("simulated downlink SINR tracks the achievable-rate SINR") {
  const int m = 6, k = 3, n = 400, symbols = 400;
  const Eigen::MatrixXd beta = random_beta(m, k, 13);
  const SampleSet s = synthetic(m, k, n, 0.3, 14, beta);
  const PowerAllocation p = equal_power(s.gbar_second_moments());
  const double p_d = 20.0;
  const UserRates r = achievable_rate(s, p_d, p);

  Rng rng(15);
  std::uniform_int_distribution<int> qpsk(0, 3);
  Eigen::VectorXcd corr = Eigen::VectorXcd::Zero(k);
  Eigen::VectorXd power = Eigen::VectorXd::Zero(k);
  for (int t = 0; t < n; ++t) {
    Eigen::MatrixXcd sym(k, symbols);
    for (Eigen::Index i = 0; i < sym.size(); ++i) sym(i) = std::polar(1.0, std::numbers::pi / 4 + std::numbers::pi / 2 * qpsk(rng));
    const Eigen::MatrixXcd rx =
        simulate_downlink(s.g[static_cast<std::size_t>(t)].cast<cplx>(), s.gbar[static_cast<std::size_t>(t)].cast<cplx>(), p,
                          p_d, sym, derive_seed(16, {static_cast<std::uint64_t>(t)}));
    for (int u = 0; u < k; ++u) {
      corr(u) += sym.row(u).dot(rx.row(u)) / static_cast<double>(symbols);  // rx * conj(sym)
      power(u) += rx.row(u).squaredNorm() / symbols;
    }
  }
  for (int u = 0; u < k; ++u) {
    const double d2 = std::norm(corr(u) / static_cast<double>(n));
    const double total = power(u) / n;
    const double measured = d2 / (total - d2);
    const double formula = std::exp2(r.rate(u)) - 1.0;
    CAPTURE(u);
    CHECK(measured == doctest::Approx(formula).epsilon(0.10));
  }

  // p_d = 0: pure unit-variance noise
  const Eigen::MatrixXcd noise = simulate_downlink(s.g[0].cast<cplx>(), s.gbar[0].cast<cplx>(), p, 0.0,
                                                   Eigen::MatrixXcd::Ones(k, 20000), 3);
  CHECK(noise.squaredNorm() / static_cast<double>(noise.size()) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("single-link received power") {
  const cplx g(0.8, 0.4);
  PowerAllocation p;
  p.eta = Eigen::MatrixXd::Constant(1, 1, 0.7);
  const Eigen::MatrixXcd one = Eigen::MatrixXcd::Constant(1, 1, g);
  const Eigen::MatrixXcd rx = simulate_downlink(one, one, p, 1e8, Eigen::MatrixXcd::Ones(1, 1), 1);
  CHECK(std::norm(rx(0, 0)) == doctest::Approx(1e8 * 0.7 * std::pow(std::norm(g), 2)).epsilon(1e-3));
}

TEST_CASE("window positions") {
  ChannelRealization ch;
  AcquisitionRun run;
  for (int l = 0; l < 20; ++l) {
    ch.g.push_back(Eigen::MatrixXcd::Constant(1, 1, cplx(l, 0)));
    run.gbar.push_back(Eigen::MatrixXcd::Constant(1, 1, cplx(l, 1)));
  }
  run.scheme = Scheme::Cep;
  run.e2p = 2;
  run.warmup_cis = 6;
  std::vector<SampleSet> pos;
  collect_samples(ch, run, pos);
  REQUIRE(pos.size() == 3);
  CHECK(pos[0].size() == 4);  // windows at 6, 9, 12, 15
  CHECK(pos[1].g[0](0, 0).real() == 7.0f);
  CHECK(pos[2].g[3](0, 0).real() == 17.0f);

  run.scheme = Scheme::Tdd;
  run.e2p = 0;
  std::vector<SampleSet> all;
  collect_samples(ch, run, all);
  REQUIRE(all.size() == 1);
  CHECK(all[0].size() == 20);
}

TEST_CASE("scheme rates average window positions") {
  const Eigen::MatrixXd beta = random_beta(4, 2, 17);
  std::vector<SampleSet> pos = {synthetic(4, 2, 300, 0.1, 18, beta), synthetic(4, 2, 300, 1.0, 19, beta)};
  const SchemeRates r = evaluate_scheme(Scheme::Cep, 1, pos, 30.0);
  const UserRates a = achievable_rate(pos[0], 30.0, equal_power(pos[0].gbar_second_moments()));
  const UserRates b = achievable_rate(pos[1], 30.0, equal_power(pos[1].gbar_second_moments()));
  CHECK(r.user_rate(1) == doctest::Approx(0.5 * (a.rate(1) + b.rate(1))));
  CHECK(r.sum_rate == doctest::Approx(r.user_rate.sum()));
  CHECK(r.sum_rate_std_error > 0.0);
  CHECK(r.realizations == 300);
  CHECK(r.insufficient_samples);
}
