#include <doctest.h>

#include <sstream>

#include "cfcep/experiment.hpp"

using namespace cfcep;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ModelBank zero_bank(int order, const std::vector<int>& ratios) {
  ModelBank bank;
  for (int n : ratios)
    for (int b = 0; b < 3; ++b) {
      MlpModel m;
      m.band = default_bands()[static_cast<std::size_t>(b)];
      m.e2p = n;
      m.order = order;
      m.net = Mlp<double>({feature_dim(order, n), 4, 4, 4, target_dim(n)}, 0.01);
      m.net.output_mean.setConstant(0.5);  // constant, nonzero prediction
      bank.insert(m);
    }
  return bank;
}

ExperimentConfig tiny() {
  return parse_config(
      "M = 6\nK = 3\narea_side_m = 400\nQ = 8\nL = 30\ndoppler = fixed 0.1\n"
      "mc_realizations = 40\ndeployments = 2\nbatches = 4\nseed = 77\n"
      "fn_grid = 0.08, 0.17\nusers_grid = 2 3\naps_grid = 4 6\n");
}

std::string sweep_text(const SweepResult& r) {
  std::ostringstream s;
  write_sweep_csv(r, s);
  return s.str();
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig c;
  CHECK(c.aps == 64);
  CHECK(c.users == 40);
  CHECK(c.order == 63);
  CHECK(c.length == 150);
  CHECK(c.pilot_length() == 40);
  CHECK(c.noise_power_w() == doctest::Approx(std::pow(10.0, -19.5) * 20e6));
  CHECK(c.rho() == doctest::Approx(0.1 / (std::pow(10.0, -19.5) * 20e6)));
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      "# comment\n\nM = 32   # trailing\nK=10\ndoppler = uniform 0.06 0.15\ne2p = 1, 3\n"
      "schemes = tdd cep perfect\ntau_c = 12\nusers_grid = 10\npredicted_only = true\nseed = 18446744073709551615\n");
  CHECK(c.aps == 32);
  CHECK(c.users == 10);
  CHECK(c.doppler.lo == 0.06);
  CHECK(c.doppler.hi == 0.15);
  CHECK(c.e2p == std::vector<int>{1, 3});
  CHECK(c.schemes == std::vector<Scheme>{Scheme::Tdd, Scheme::Cep, Scheme::Perfect});
  CHECK(c.pilot_length() == 12);
  CHECK(c.predicted_only);
  CHECK(c.seed == 18446744073709551615ull);
  CHECK(c.source_lines.at("K") == 4);

  CHECK(parse_config("doppler = 0.1").doppler.hi == 0.1);
  CHECK(parse_config("tau_c = auto\nK = 7").pilot_length() == 7);
}

TEST_CASE("config errors name the line") {
  CHECK(error_of("M = 4\nbogus = 1\n").find("line 2: unknown key 'bogus'") != std::string::npos);
  CHECK(error_of("M = 4\nM = 5\n").find("line 2: M: duplicate key") != std::string::npos);
  CHECK(error_of("\n\nK =\n").find("line 3: K: missing value") != std::string::npos);
  CHECK(error_of("Q = 6x\n").find("line 1: Q") != std::string::npos);
  CHECK(error_of("just words\n").find("line 1") != std::string::npos);
  CHECK(error_of("K = 10\ntau_c = 8\n").find("line 2: tau_c") != std::string::npos);
  CHECK(error_of("\ndoppler = uniform 0.1 0.3\n").find("line 2: doppler") != std::string::npos);
  CHECK(error_of("doppler = 0\n").find("doppler") != std::string::npos);
  CHECK(error_of("schemes = fdd\n").find("line 1: schemes") != std::string::npos);
  CHECK(error_of("tau = 30\n").find("tau") != std::string::npos);  // K = 40 pilots do not fit
  CHECK(error_of("predicted_only = maybe\n").find("line 1") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), IoError);
}

TEST_CASE("canonical text round-trips") {
  ExperimentConfig c = tiny();
  c.large_scale.shadowing_db = 6.5;
  c.hyper.hidden_width = 17;
  const ExperimentConfig back = parse_config(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.hash() == c.hash());
  ExperimentConfig d = c;
  d.seed = 78;
  CHECK(d.hash() != c.hash());
  CHECK(c.hash().size() == 16);
}

TEST_CASE("scheme expansion") {
  ExperimentConfig c;
  const auto s = expand_schemes(c);
  REQUIRE(s.size() == 5);
  CHECK(s[0] == SchemeSpec{Scheme::Tdd, 0});
  CHECK(s[1] == SchemeSpec{Scheme::Cep, 1});
  CHECK(s[2] == SchemeSpec{Scheme::Cep, 2});
  CHECK(s[3] == SchemeSpec{Scheme::Identity, 1});
  CHECK(s[4].alpha() == 0.5);
}

TEST_CASE("trace sets cover the requested realizations") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd, Scheme::Cep};
  c.e2p = {1};
  // Q = 8, N = 1: depth 4, warm-up 6, (30 - 6) / 2 = 12 windows per trace
  CHECK(trace_sets_needed(c, expand_schemes(c), c.order) == 4);
  c.length = 7;
  CHECK_THROWS_AS(trace_sets_needed(c, expand_schemes(c), c.order), ConfigError);
}

TEST_CASE("evaluate point") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd, Scheme::Cep, Scheme::Identity, Scheme::Perfect};
  const ModelBank bank = zero_bank(c.order, c.e2p);
  ProfileCache profiles;
  std::vector<std::string> lines;
  const PointResult p = evaluate_point(c, &bank, profiles, 1, [&](const std::string& s) { lines.push_back(s); });
  REQUIRE(p.schemes.size() == 6);
  CHECK(p.deployments.size() == 2);
  CHECK(!lines.empty());
  for (const auto& s : p.schemes) {
    CAPTURE(scheme_name(s.spec.scheme));
    CHECK(s.deployments.size() == 2);
    CHECK(s.realizations >= 40);
    CHECK(s.sum_rate > 0.0);
    CHECK(s.net_throughput == doctest::Approx(c.bandwidth_hz * s.overhead * s.sum_rate));
    CHECK(s.insufficient_samples);
    const double mean = 0.5 * (s.deployments[0].sum_rate + s.deployments[1].sum_rate);
    CHECK(s.sum_rate == doctest::Approx(mean));
  }
  const double perfect = p.schemes[5].sum_rate;
  for (const auto& s : p.schemes) CHECK(s.sum_rate <= perfect * (1 + 1e-9) + 3 * (s.sum_rate_se + p.schemes[5].sum_rate_se));

  CHECK_THROWS_AS(evaluate_point(c, nullptr, profiles), ConfigError);

  // identical results with more threads
  const PointResult q = evaluate_point(c, &bank, profiles, 3);
  for (std::size_t i = 0; i < p.schemes.size(); ++i) CHECK(q.schemes[i].sum_rate == p.schemes[i].sum_rate);
}

TEST_CASE("schemes share channels and noise") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd, Scheme::Identity};
  c.e2p = {1};
  ProfileCache profiles;
  const PointResult p = evaluate_point(c, nullptr, profiles);
  // identity ET slots reuse exactly the TDD estimate, so its first window position equals TDD on those CIs
  const auto& id = p.schemes[1].deployments[0];
  CHECK(id.positions.size() == 2);
  CHECK(id.positions[0].rate.sum() > id.positions[1].rate.sum());
}

TEST_CASE("sweep CSV schema and determinism") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd, Scheme::Cep};
  c.e2p = {1, 2};
  const ModelBank bank = zero_bank(c.order, c.e2p);
  const SweepResult r = sweep_doppler(c, &bank);
  CHECK(r.variable == "f_n");
  const std::string text = sweep_text(r);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "f_n,scheme,N,sum_rate_bps_hz,net_throughput_bps,stderr,seed,config_hash");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    CHECK(line.find(",77," + c.hash()) != std::string::npos);
  }
  CHECK(rows == 2 * 3);
  CHECK(text.find("0.08,tdd,0,") != std::string::npos);
  CHECK(text.find("0.17,cep,2,") != std::string::npos);

  CHECK(sweep_text(sweep_doppler(c, &bank, 2)) == text);
  c.seed = 78;
  CHECK(sweep_text(sweep_doppler(c, &bank)) != text);
}

TEST_CASE("user and AP sweeps") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd};
  const SweepResult k = sweep_users(c, nullptr);
  CHECK(k.variable == "K");
  REQUIRE(k.points.size() == 2);
  CHECK(k.points[0].schemes[0].deployments[0].user_rate.size() == 2);
  CHECK(k.points[0].schemes[0].overhead == doctest::Approx(1.0 - 2.0 / 200));
  const SweepResult m = sweep_aps(c, nullptr);
  CHECK(m.variable == "M");
  CHECK(m.points[0].deployments[0].beta.rows() == 4);
  CHECK(sweep_text(m).rfind("M,scheme", 0) == 0);
}

TEST_CASE("eval CSV") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd, Scheme::Identity};
  c.e2p = {2};
  ProfileCache profiles;
  const PointResult p = evaluate_point(c, nullptr, profiles);
  std::ostringstream s;
  write_eval_csv(c, p, s);
  std::istringstream in(s.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "deployment,user,position,scheme,N,f_n,rate_bps_hz,net_throughput_bps,stderr,realizations,seed,config_hash");
  int rows = 0, summary = 0;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("all,sum,", 0) == 0) ++summary;
  }
  // per deployment: TDD 3 users x (1 position + avg), identity 3 x (3 + avg); plus one summary per scheme
  CHECK(rows == 2 * (3 * 2 + 3 * 4) + 2);
  CHECK(summary == 2);
}

TEST_CASE("bank loading") {
  ExperimentConfig c = tiny();
  c.schemes = {Scheme::Tdd};
  CHECK(load_bank_for(c, "/nonexistent").size() == 0);
  c.schemes = {Scheme::Cep};
  CHECK_THROWS_AS(load_bank_for(c, "/nonexistent"), IoError);

  const auto dir = std::filesystem::temp_directory_path() / "cfcep_bank_test";
  std::filesystem::create_directories(dir);
  const ModelBank bank = zero_bank(c.order, c.e2p);
  for (int n : c.e2p)
    for (int b = 0; b < 3; ++b)
      save_model(select_model(bank, default_bands()[static_cast<std::size_t>(b)].midpoint(), n), dir / model_filename(b, n));
  CHECK(load_bank_for(c, dir).size() == 6);
  c.order = 9;
  CHECK_THROWS_AS(load_bank_for(c, dir), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("training spec") {
  const ExperimentConfig c = tiny();
  const TrainingDataSpec s = training_spec(c, 1, 2);
  CHECK(s.order == 8);
  CHECK(s.e2p == 2);
  CHECK(s.n_traces == c.train_traces);
  CHECK(s.band.lo == default_bands()[1].lo);
  CHECK(training_spec(c, 1, 2).seed == s.seed);
  CHECK(training_spec(c, 2, 2).seed != s.seed);
}
