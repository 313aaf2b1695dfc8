#include <doctest.h>

#include <cmath>

#include "cfcep/cep_scheduler.hpp"

using namespace cfcep;

namespace {

struct Fixture {
  Deployment dep;
  std::vector<std::shared_ptr<TraceGenerator>> gens;
  std::vector<const TraceGenerator*> ptrs;
  std::vector<AgingProfile> profiles;
  PilotBook pilots;
  LinkContext ctx;
  ChannelRealization ch;

  Fixture(int m, int k, double f_n, int length, double rho = 1e9, int order = 63) {
    dep = make_deployment(m, k, 300.0, DopplerSpec::fixed(f_n), 4);
    for (int u = 0; u < k; ++u) {
      gens.push_back(std::make_shared<TraceGenerator>(fit_ar(f_n, order)));
      ptrs.push_back(gens.back().get());
      profiles.push_back(gens.back()->profile());
    }
    pilots = make_pilots(k, k);
    ctx = make_link_context(dep, profiles, pilots, rho);
    ch = realize_channels(dep, ptrs, length, 8);
  }
};

// Returns the true channels and records what it was asked.
class OraclePredictor final : public ChannelPredictor {
 public:
  OraclePredictor(const ChannelRealization& ch, int depth) : ch_(ch), depth_(depth) {}
  int history_depth(int) const override { return depth_; }
  Eigen::MatrixXcd predict(int e2p, std::span<const Query> queries, const Eigen::MatrixXcd& histories,
                           const LinkContext&) const override {
    calls.push_back(queries.front().et_ci);
    last_histories = histories;
    last_queries.assign(queries.begin(), queries.end());
    Eigen::MatrixXcd out(e2p, static_cast<Eigen::Index>(queries.size()));
    for (std::size_t i = 0; i < queries.size(); ++i)
      for (int d = 1; d <= e2p; ++d) {
        const int l = std::min(queries[i].et_ci + d, ch_.length() - 1);
        out(d - 1, static_cast<Eigen::Index>(i)) = ch_.g[static_cast<std::size_t>(l)](queries[i].ap, queries[i].user);
      }
    return out;
  }
  mutable std::vector<int> calls;
  mutable Eigen::MatrixXcd last_histories;
  mutable std::vector<Query> last_queries;

 private:
  const ChannelRealization& ch_;
  int depth_;
};

}  // namespace

TEST_CASE("schedules") {
  const Schedule one = make_schedule(1);
  CHECK(one.role(0) == CiRole::Estimate);
  CHECK(one.role(1) == CiRole::Predict);
  CHECK(one.role(2) == CiRole::Estimate);
  CHECK(one.alpha() == 1.0);
  CHECK(one.pilot_count(150) == 75);
  const Schedule two = make_schedule(2);
  CHECK(two.role(3) == CiRole::Estimate);
  CHECK(two.role(4) == CiRole::Predict);
  CHECK(two.role(5) == CiRole::Predict);
  CHECK(two.alpha() == 0.5);
  CHECK(two.pilot_count(150) == 50);
  CHECK(two.pilot_count(151) == 51);
  for (int n = 1; n <= 4; ++n) {
    const Schedule s = make_schedule(n);
    for (long l = 0; l < 40; ++l) CHECK(s.role(l) == s.role(l + n + 1));
    CHECK(2 * s.pilot_count(150) <= 150);
  }
  CHECK_THROWS_AS(make_schedule(0), DomainError);
}

TEST_CASE("overhead factors") {
  CHECK(overhead_factor(Scheme::Tdd, 1.0, 40, 200) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(overhead_factor(Scheme::Cep, 1.0, 40, 200) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(overhead_factor(Scheme::Cep, 0.5, 40, 200) == doctest::Approx(0.9333333333333333).epsilon(1e-15));
  CHECK(overhead_factor(Scheme::Identity, 0.5, 40, 200) == overhead_factor(Scheme::Cep, 0.5, 40, 200));
  CHECK(overhead_factor(Scheme::Perfect, 1.0, 40, 200) == 1.0);
  CHECK(overhead_factor(Scheme::Tdd, 1.0, 1, 200) == doctest::Approx(1.0 - 1.0 / 200));
  CHECK_THROWS_AS(overhead_factor(Scheme::Tdd, 1.0, 201, 200), DomainError);
  CHECK_THROWS_AS(overhead_factor(Scheme::Cep, 0.0, 40, 200), DomainError);
  CHECK_THROWS_AS(overhead_factor(Scheme::Cep, 1.0, 0, 200), DomainError);
}

TEST_CASE("scheme names") {
  for (Scheme s : {Scheme::Tdd, Scheme::Cep, Scheme::Identity, Scheme::Perfect}) CHECK(parse_scheme(scheme_name(s)) == s);
  CHECK_THROWS_AS(parse_scheme("fdd"), ConfigError);
}

TEST_CASE("channel realization applies large-scale gains") {
  Fixture f(3, 2, 0.1, 20);
  CHECK(f.ch.length() == 20);
  CHECK(f.ch.aps() == 3);
  CHECK(f.ch.users() == 2);
  const Eigen::MatrixXcd h = f.gens[1]->generate(3, 20, derive_seed(8, {1}));
  for (int l = 0; l < 20; ++l)
    for (int m = 0; m < 3; ++m)
      CHECK(std::abs(f.ch.g[static_cast<std::size_t>(l)](m, 1) - std::sqrt(f.dep.beta(m, 1)) * h(l, m)) < 1e-15);
  const std::vector<const TraceGenerator*> too_few(1, f.ptrs[0]);
  CHECK_THROWS_AS(realize_channels(f.dep, too_few, 20, 8), DimensionError);
}

TEST_CASE("TDD estimates every CI") {
  Fixture f(2, 2, 0.1, 30);
  const AcquisitionRun run = run_tdd(f.ch, f.ctx, 5);
  CHECK(run.pilot_transmissions == 30);
  CHECK(run.gbar.size() == 30);
  for (CiRole r : run.roles) CHECK(r == CiRole::Estimate);
  const AcquisitionRun again = run_tdd(f.ch, f.ctx, 5);
  CHECK(again.gbar == run.gbar);
}

TEST_CASE("TDD estimate variance matches gamma") {
  // many APs at the same gain so every link shares one gamma
  Fixture f(400, 1, 0.1, 150, 3.0);
  f.dep.beta.setConstant(0.5);
  f.ctx = make_link_context(f.dep, f.profiles, f.pilots, 3.0);
  f.ch = realize_channels(f.dep, f.ptrs, 150, 8);
  const AcquisitionRun run = run_tdd(f.ch, f.ctx, 2);
  double var = 0.0;
  for (const auto& e : run.gbar) var += e.squaredNorm();
  var /= 150.0 * 400.0;
  CHECK(var == doctest::Approx(f.ctx.gamma(0, 0)).epsilon(0.05));
}

TEST_CASE("identity mapping reuses the window's estimate") {
  Fixture f(3, 2, 0.12, 31);
  const AcquisitionRun tdd = run_tdd(f.ch, f.ctx, 7);
  for (int n : {1, 2}) {
    const AcquisitionRun id = run_identity(f.ch, f.ctx, n, 7);
    CHECK(id.pilot_transmissions == make_schedule(n).pilot_count(31));
    CHECK(id.warmup_cis == 0);
    for (int l = 0; l < 31; ++l) {
      const int et = l - l % (n + 1);
      CHECK(id.roles[static_cast<std::size_t>(l)] == make_schedule(n).role(l));
      CHECK(id.gbar[static_cast<std::size_t>(l)] == tdd.gbar[static_cast<std::size_t>(et)]);
    }
  }
}

TEST_CASE("identity mapping is exact up to estimation error for a static channel") {
  Fixture f(3, 1, 1e-4, 20, 1e22, 4);
  const AcquisitionRun id = run_identity(f.ch, f.ctx, 1, 3);
  for (int l = 1; l < 20; l += 2)
    CHECK((id.gbar[static_cast<std::size_t>(l)] - f.ch.g[static_cast<std::size_t>(l)]).cwiseAbs().maxCoeff() <
          3e-3 * f.ch.g[static_cast<std::size_t>(l)].cwiseAbs().maxCoeff());
}

TEST_CASE("CEP with an oracle predictor") {
  Fixture f(2, 3, 0.1, 150);
  const int depth = history_depth(63, 1);
  OraclePredictor oracle(f.ch, depth);
  const AcquisitionRun cep = run_cep(f.ch, f.ctx, oracle, 1, 9);
  const AcquisitionRun id = run_identity(f.ch, f.ctx, 1, 9);
  CHECK(cep.warmup_cis == 62);
  CHECK(cep.pilot_transmissions == 75);
  // first prediction happens at the 32nd ET CI, with 32 stored estimates
  REQUIRE(!oracle.calls.empty());
  CHECK(oracle.calls.front() == 62);
  CHECK(oracle.last_histories.rows() == depth);
  for (int l = 0; l < 150; ++l) {
    const auto i = static_cast<std::size_t>(l);
    if (l % 2 == 0) {
      CHECK(cep.gbar[i] == id.gbar[i]);  // same ET estimates
    } else if (l < 62) {
      CHECK(cep.gbar[i] == id.gbar[i]);  // warm-up falls back to identity
    } else {
      CHECK(cep.gbar[i] == f.ch.g[i]);
    }
  }
  // each query's history holds only that link's own estimates, most recent first
  const AcquisitionRun tdd = run_tdd(f.ch, f.ctx, 9);
  const int et = oracle.calls.back();
  for (std::size_t q = 0; q < oracle.last_queries.size(); ++q) {
    const auto& query = oracle.last_queries[q];
    for (int i = 0; i < depth; ++i)
      CHECK(oracle.last_histories(i, static_cast<Eigen::Index>(q)) ==
            tdd.gbar[static_cast<std::size_t>(et - 2 * i)](query.ap, query.user));
  }
}

TEST_CASE("CEP 1:2 oracle fills both predicted CIs") {
  Fixture f(2, 2, 0.15, 90);
  OraclePredictor oracle(f.ch, history_depth(63, 2));
  const AcquisitionRun cep = run_cep(f.ch, f.ctx, oracle, 2, 1);
  CHECK(cep.warmup_cis == 60);
  CHECK(oracle.calls.front() == 60);
  for (int l = 61; l < 90; ++l)
    if (l % 3 != 0) CHECK(cep.gbar[static_cast<std::size_t>(l)] == f.ch.g[static_cast<std::size_t>(l)]);
}

TEST_CASE("bank predictor works in the unit-gain domain") {
  Fixture f(3, 2, 0.18, 80);
  ModelBank bank;
  MlpModel m;
  m.band = default_bands()[2];
  m.e2p = 1;
  m.order = 63;
  m.net = Mlp<double>({66, 4, 4, 4, 2}, 0.01);
  m.net.output_mean << 1.0, -0.5;  // zero network: constant unit-domain prediction
  bank.insert(m);
  const BankPredictor pred(bank, 63);
  CHECK(pred.history_depth(1) == 32);
  const AcquisitionRun cep = run_cep(f.ch, f.ctx, pred, 1, 2);
  const Eigen::MatrixXcd& g = cep.gbar[71];
  for (int mm = 0; mm < 3; ++mm)
    for (int k = 0; k < 2; ++k)
      CHECK(std::abs(g(mm, k) - std::sqrt(f.dep.beta(mm, k)) * cplx(1.0, -0.5)) < 1e-6 * std::sqrt(f.dep.beta(mm, k)));

  CHECK_THROWS_AS(run_cep(f.ch, f.ctx, pred, 2, 2), ConfigError);  // no 1:2 model
  Fixture slow(2, 1, 0.07, 80);
  CHECK_THROWS_AS(run_cep(slow.ch, slow.ctx, pred, 1, 2), ConfigError);  // no band-1 model
}

TEST_CASE("perfect CSI run") {
  Fixture f(2, 2, 0.1, 10);
  const AcquisitionRun p = run_perfect(f.ch);
  CHECK(p.gbar == f.ch.g);
  CHECK(p.pilot_transmissions == 0);
}
