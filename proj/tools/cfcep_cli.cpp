// Command-line driver: training data, model training, evaluation and sweeps.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "cfcep/experiment.hpp"

using namespace cfcep;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string models;
  int threads = 1;
  int band = 0;  // 1-based; 0 = all
  int e2p = 0;   // 0 = all configured
  std::string data;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.models.empty()) cfg.models = o.models;
  cfg.validate();
  return cfg;
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

// Writes through a temporary so a failed run never leaves a partial file.
template <class Writer>
void emit(const std::string& path, Writer write) {
  if (path.empty()) {
    write(std::cout);
    return;
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write " + tmp);
    write(f);
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::vector<int> bands_of(const Options& o) {
  if (o.band == 0) return {0, 1, 2};
  if (o.band < 1 || o.band > 3) throw ConfigError("--band must be 1, 2 or 3");
  return {o.band - 1};
}

std::vector<int> ratios_of(const Options& o, const ExperimentConfig& cfg) {
  if (o.e2p == 0) return cfg.e2p;
  if (o.e2p < 1) throw ConfigError("--e2p must be at least 1");
  return {o.e2p};
}

int cmd_gen_data(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  if (o.band == 0 || o.e2p == 0) throw ConfigError("gen-data needs --band and --e2p");
  const int band = bands_of(o).front();
  const TrainingData data = generate_training_data(training_spec(cfg, band, o.e2p));
  const std::string path = o.out.empty() ? "dataset_b" + std::to_string(o.band) + "_n" + std::to_string(o.e2p) + ".bin" : o.out;
  save_dataset(data, path);
  std::cout << "wrote " << data.size() << " samples to " << path << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const auto bands = bands_of(o);
  const auto ratios = ratios_of(o, cfg);
  if (!o.out.empty() && bands.size() * ratios.size() != 1) throw ConfigError("--out needs a single --band and --e2p");
  if (!o.data.empty() && bands.size() * ratios.size() != 1) throw ConfigError("--data needs a single --band and --e2p");
  std::filesystem::create_directories(cfg.models);
  for (int n : ratios) {
    for (int b : bands) {
      const auto start = std::chrono::steady_clock::now();
      const TrainingData data = o.data.empty() ? generate_training_data(training_spec(cfg, b, n)) : load_dataset(o.data);
      const Band& band = default_bands()[static_cast<std::size_t>(b)];
      TrainingReport report;
      const MlpModel model = train_model(data, band, n, cfg.order, cfg.hyper,
                                         derive_seed(cfg.seed, {200, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(n)}),
                                         cfg.train_single_precision, &report);
      const std::filesystem::path path =
          o.out.empty() ? std::filesystem::path(cfg.models) / model_filename(b, n) : std::filesystem::path(o.out);
      save_model(model, path);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      // per-real-output MSE x 2 = per complex channel
      std::cout << "band " << band.label() << " 1:" << n << "  samples " << data.size() << "  epochs "
                << report.epochs_run << " (best " << report.best_epoch << ")  train_mse " << 2.0 * report.train_mse
                << "  validation_mse " << 2.0 * report.validation_mse << "  identity_mse@" << band.midpoint() << " "
                << identity_mapping_mse(band.midpoint()) << "  " << secs << " s  -> " << path.string() << "\n";
    }
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const ModelBank bank = load_bank_for(cfg, cfg.models);
  ProfileCache profiles;
  const PointResult point = evaluate_point(cfg, &bank, profiles, o.threads, log_line);
  emit(o.out, [&](std::ostream& s) { write_eval_csv(cfg, point, s); });
  return 0;
}

template <class Sweep>
int cmd_sweep(const Options& o, Sweep sweep) {
  const ExperimentConfig cfg = resolve(o);
  const ModelBank bank = load_bank_for(cfg, cfg.models);
  const SweepResult result = sweep(cfg, &bank, o.threads, log_line);
  emit(o.out, [&](std::ostream& s) { write_sweep_csv(result, s); });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell-free massive MIMO channel estimation and prediction simulator"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config file (key = value)");
    sub->add_option("--seed", o.seed, "master seed, overrides the config");
    sub->add_option("--out", o.out, "output file (stdout for CSV when omitted)");
    sub->add_option("--models", o.models, "model directory, overrides the config");
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "generate a training dataset for one band and ratio");
  common(gen);
  gen->add_option("--band", o.band, "Doppler band 1, 2 or 3");
  gen->add_option("--e2p", o.e2p, "N of the 1:N ratio");

  auto* train = app.add_subcommand("train", "train band models (all bands and configured ratios by default)");
  common(train);
  train->add_option("--band", o.band, "Doppler band 1, 2 or 3");
  train->add_option("--e2p", o.e2p, "N of the 1:N ratio");
  train->add_option("--data", o.data, "train on this dataset instead of generating one");

  auto* eval = app.add_subcommand("eval", "evaluate every configured scheme at one operating point");
  common(eval);
  auto* sfn = app.add_subcommand("sweep-fn", "net throughput versus normalized Doppler");
  common(sfn);
  auto* susers = app.add_subcommand("sweep-users", "net throughput versus number of users");
  common(susers);
  auto* saps = app.add_subcommand("sweep-aps", "net throughput versus number of APs");
  common(saps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (sfn->parsed()) return cmd_sweep(o, sweep_doppler);
    if (susers->parsed()) return cmd_sweep(o, sweep_users);
    if (saps->parsed()) return cmd_sweep(o, sweep_aps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedMobilityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
