#include "cfcep/predictor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cfcep/channel_model.hpp"
#include "cfcep/pilot_estimation.hpp"

namespace cfcep {

bool Band::contains(double f_n) const {
  const bool above = lo_closed ? f_n >= lo : f_n > lo;
  const bool below = hi_closed ? f_n <= hi : f_n < hi;
  return above && below;
}

std::string Band::label() const {
  std::ostringstream s;
  s << (lo_closed ? '[' : '(') << lo << ", " << hi << (hi_closed ? ']' : ')');
  return s.str();
}

const std::array<Band, 3>& default_bands() {
  static const std::array<Band, 3> bands{{
      {0.05, 0.10, false, true},
      {0.10, 0.16, false, false},
      {0.16, 0.20, true, true},
  }};
  return bands;
}

int band_index(double f_n) {
  const auto& bands = default_bands();
  for (std::size_t i = 0; i < bands.size(); ++i)
    if (bands[i].contains(f_n)) return static_cast<int>(i);
  return -1;
}

int history_depth(int order, int e2p) {
  if (order < 1 || e2p < 1) throw DomainError("history_depth: order and N must be >= 1");
  return (order + e2p) / (e2p + 1);
}

int feature_dim(int order, int e2p) { return 2 * history_depth(order, e2p) + 2; }
int target_dim(int e2p) { return 2 * e2p; }

void MlpModel::validate() const {
  if (net.weights.empty()) throw DimensionError("model has no layers");
  if (net.input_dim() != feature_dim(order, e2p))
    throw DimensionError("model input size " + std::to_string(net.input_dim()) + " does not match 2*ceil(Q/(N+1))+2 = " +
                         std::to_string(feature_dim(order, e2p)));
  if (net.output_dim() != target_dim(e2p))
    throw DimensionError("model output size does not match 2N");
  if (net.input_std.size() != net.input_dim() || net.output_std.size() != net.output_dim() ||
      net.input_mean.size() != net.input_dim() || net.output_mean.size() != net.output_dim())
    throw DimensionError("model normalization vectors have the wrong length");
  if ((net.input_std.array() <= 0.0).any() || (net.output_std.array() <= 0.0).any())
    throw DimensionError("model normalization deviations must be positive");
}

void build_features_into(std::span<const cplx> history, double a1, int depth,
                         Eigen::Ref<Eigen::MatrixXd> out, Eigen::Index col) {
  if (static_cast<int>(history.size()) < depth)
    throw WarmupError("build_features: need " + std::to_string(depth) + " ET estimates, have " +
                      std::to_string(history.size()));
  for (int i = 0; i < depth; ++i) {
    out(2 * i, col) = history[static_cast<std::size_t>(i)].real();
    out(2 * i + 1, col) = history[static_cast<std::size_t>(i)].imag();
  }
  out(2 * depth, col) = -a1 * history[0].real();
  out(2 * depth + 1, col) = -a1 * history[0].imag();
}

Eigen::VectorXd build_features(std::span<const cplx> history, double a1, int depth) {
  Eigen::MatrixXd out(2 * depth + 2, 1);
  build_features_into(history, a1, depth, out, 0);
  return out.col(0);
}

Eigen::MatrixXcd pair_outputs(const Eigen::MatrixXd& outputs) {
  const Eigen::Index n = outputs.rows() / 2;
  Eigen::MatrixXcd out(n, outputs.cols());
  for (Eigen::Index c = 0; c < outputs.cols(); ++c)
    for (Eigen::Index i = 0; i < n; ++i) out(i, c) = {outputs(2 * i, c), outputs(2 * i + 1, c)};
  return out;
}

std::vector<cplx> predict_channels(const MlpModel& model, std::span<const cplx> history, double a1) {
  const Eigen::MatrixXd x = build_features(history, a1, model.history());
  const Eigen::MatrixXcd paired = pair_outputs(model.net.forward(x));
  return {paired.data(), paired.data() + paired.size()};
}

void ModelBank::insert(MlpModel model) {
  model.validate();
  int idx = -1;
  const auto& bands = default_bands();
  for (std::size_t i = 0; i < bands.size(); ++i)
    if (bands[i] == model.band) idx = static_cast<int>(i);
  if (idx < 0) throw ConfigError("model bank: band " + model.band.label() + " is not a supported band");
  const auto key = std::make_pair(idx, model.e2p);
  fast_[key] = model.net.cast<float>();
  models_[key] = std::move(model);
}

bool ModelBank::contains(int band, int e2p) const { return models_.count({band, e2p}) > 0; }

const MlpModel& ModelBank::at(int band, int e2p) const {
  const auto it = models_.find({band, e2p});
  if (it == models_.end())
    throw ConfigError("model bank: no model for band " + std::to_string(band + 1) + ", N=" + std::to_string(e2p));
  return it->second;
}

const Mlp<float>& ModelBank::fast(int band, int e2p) const {
  at(band, e2p);
  return fast_.at({band, e2p});
}

std::string model_filename(int band, int e2p) {
  return "model_b" + std::to_string(band + 1) + "_n" + std::to_string(e2p) + ".bin";
}

ModelBank ModelBank::load_directory(const std::filesystem::path& dir, const std::vector<int>& e2p_list) {
  ModelBank bank;
  for (int n : e2p_list) {
    for (int b = 0; b < static_cast<int>(default_bands().size()); ++b) {
      const auto path = dir / model_filename(b, n);
      if (std::filesystem::exists(path)) bank.insert(load_model(path));
    }
  }
  return bank;
}

const MlpModel& select_model(const ModelBank& bank, double f_n, int e2p) {
  const int b = band_index(f_n);
  if (b < 0) {
    std::ostringstream msg;
    msg << "select_model: f_n = " << f_n << " is outside the supported range (0.05, 0.2]";
    throw UnsupportedMobilityError(msg.str());
  }
  return bank.at(b, e2p);
}

int windows_per_trace(int trace_len, int order, int e2p) {
  const int depth = history_depth(order, e2p);
  const int last = (trace_len - 1 - e2p) / (e2p + 1);  // last ET index with a full window
  if (trace_len - 1 - e2p < 0) return 0;
  return std::max(0, last - (depth - 1) + 1);
}

TrainingData generate_training_data(const TrainingDataSpec& spec) {
  const int depth = history_depth(spec.order, spec.e2p);
  const int n = spec.e2p;
  const int per_trace = windows_per_trace(spec.trace_len, spec.order, n);
  if (spec.n_traces < 0 || spec.trace_len < 1) throw DomainError("generate_training_data: invalid trace budget");
  if (!(spec.band.lo > 0.0) || spec.band.hi > kMaxNormalizedDoppler || spec.band.hi <= spec.band.lo)
    throw DomainError("generate_training_data: band must lie within (0, 0.2]");

  TrainingData data;
  const Eigen::Index total = static_cast<Eigen::Index>(per_trace) * spec.n_traces;
  data.features.resize(2 * depth + 2, total);
  data.targets.resize(2 * n, total);
  if (total == 0) return data;

  const PilotBook pilot = make_pilots(1, spec.tau_c);
  std::vector<cplx> est;
  std::vector<cplx> hist(static_cast<std::size_t>(depth));
  Eigen::VectorXcd h(spec.trace_len);
  Eigen::MatrixXcd g(1, 1);
  Eigen::Index col = 0;
  for (int t = 0; t < spec.n_traces; ++t) {
    const auto tt = static_cast<std::uint64_t>(t);
    Rng rng(derive_seed(spec.seed, {tt, 0}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = 1e-9 + (1.0 - 2e-9) * unit(rng);
    const double f_n = spec.band.lo + u * (spec.band.hi - spec.band.lo);
    const double rho = spec.rho * std::pow(10.0, -spec.rho_spread_db * unit(rng) / 10.0);

    const AgingProfile profile = fit_ar(f_n, spec.order);
    TraceGenerator(profile).generate_link(derive_seed(spec.seed, {tt, 1}), h);
    const MmseLinkStats stats = link_stats(1.0, profile.stationary_var, rho, spec.tau_c);
    const double a1 = profile.coeffs(0);

    est.clear();
    for (int l = 0; l < spec.trace_len; l += n + 1) {
      g(0, 0) = h(l);
      const auto obs = receive_pilots(g, pilot, rho, derive_seed(spec.seed, {tt, 2, static_cast<std::uint64_t>(l)}));
      est.push_back(mmse_estimate(obs.y_bar(0, 0), stats, rho, spec.tau_c));
    }
    for (int j = depth - 1; j < depth - 1 + per_trace; ++j) {
      for (int i = 0; i < depth; ++i) hist[static_cast<std::size_t>(i)] = est[static_cast<std::size_t>(j - i)];
      build_features_into(hist, a1, depth, data.features, col);
      for (int d = 1; d <= n; ++d) {
        const cplx target = h((n + 1) * j + d);
        data.targets(2 * (d - 1), col) = target.real();
        data.targets(2 * (d - 1) + 1, col) = target.imag();
      }
      ++col;
    }
  }
  return data;
}

double complex_mse(const MlpModel& model, const TrainingData& data) {
  if (data.size() == 0) return 0.0;
  double acc = 0.0;
  const Eigen::Index chunk = 4096;
  for (Eigen::Index c = 0; c < data.features.cols(); c += chunk) {
    const Eigen::Index k = std::min(chunk, data.features.cols() - c);
    acc += (model.net.forward(data.features.middleCols(c, k)) - data.targets.middleCols(c, k)).squaredNorm();
  }
  return acc / (static_cast<double>(data.size()) * model.e2p);
}

double identity_mapping_mse(double f_n, double sigma2_h) { return 2.0 * sigma2_h * (1.0 - acf(f_n, 1)); }

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void close() {
    out_.close();
    if (!out_) throw IoError("write failed for " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  template <typename T>
  T get() {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
  }
  void get_doubles(double* p, std::size_t n) { read(reinterpret_cast<char*>(p), n * sizeof(double)); }
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(path_.string() + ": truncated file");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  model.validate();
  Writer w(path);
  w.raw(kModelMagic, sizeof kModelMagic);
  w.put<std::uint32_t>(kModelVersion);
  w.put<double>(model.band.lo);
  w.put<double>(model.band.hi);
  w.put<std::uint8_t>(model.band.lo_closed ? 1 : 0);
  w.put<std::uint8_t>(model.band.hi_closed ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.e2p));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.order));
  w.put<double>(model.net.leaky_slope);
  const auto dims = model.net.dims();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.size() - 1));
  for (int d : dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < model.net.weights.size(); ++i) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = model.net.weights[i];
    w.put_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    w.put_doubles(model.net.biases[i].data(), static_cast<std::size_t>(model.net.biases[i].size()));
  }
  for (const auto* v : {&model.net.input_mean, &model.net.input_std, &model.net.output_mean, &model.net.output_std})
    w.put_doubles(v->data(), static_cast<std::size_t>(v->size()));
  w.close();
}

MlpModel load_model(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kModelMagic, sizeof magic) != 0) throw FormatError(path.string() + ": not a model file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion)
    throw FormatError(path.string() + ": unsupported model format version " + std::to_string(version));
  MlpModel m;
  m.band.lo = r.get<double>();
  m.band.hi = r.get<double>();
  m.band.lo_closed = r.get<std::uint8_t>() != 0;
  m.band.hi_closed = r.get<std::uint8_t>() != 0;
  m.e2p = static_cast<int>(r.get<std::uint32_t>());
  m.order = static_cast<int>(r.get<std::uint32_t>());
  const double slope = r.get<double>();
  const auto layers = r.get<std::uint32_t>();
  if (layers == 0 || layers > 64) throw FormatError(path.string() + ": implausible layer count");
  std::vector<int> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0 || d > (1u << 20)) throw FormatError(path.string() + ": implausible layer size");
    dims.push_back(static_cast<int>(d));
  }
  if (m.e2p < 1 || m.order < 1) throw FormatError(path.string() + ": invalid N or Q");
  if (dims.front() != feature_dim(m.order, m.e2p) || dims.back() != target_dim(m.e2p))
    throw DimensionError(path.string() + ": layer dims " + std::to_string(dims.front()) + "->" +
                         std::to_string(dims.back()) + " inconsistent with Q=" + std::to_string(m.order) +
                         ", N=" + std::to_string(m.e2p));
  m.net = Mlp<double>(dims, slope);
  for (std::size_t i = 0; i < m.net.weights.size(); ++i) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(m.net.weights[i].rows(),
                                                                              m.net.weights[i].cols());
    r.get_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    m.net.weights[i] = rm;
    r.get_doubles(m.net.biases[i].data(), static_cast<std::size_t>(m.net.biases[i].size()));
  }
  for (auto* v : {&m.net.input_mean, &m.net.input_std, &m.net.output_mean, &m.net.output_std})
    r.get_doubles(v->data(), static_cast<std::size_t>(v->size()));
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after model payload");
  m.validate();
  return m;
}

void save_dataset(const TrainingData& data, const std::filesystem::path& path) {
  Writer w(path);
  w.raw(kDatasetMagic, sizeof kDatasetMagic);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.features.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.targets.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(data.size()));
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    w.put_doubles(data.features.col(c).data(), static_cast<std::size_t>(data.features.rows()));
    w.put_doubles(data.targets.col(c).data(), static_cast<std::size_t>(data.targets.rows()));
  }
  w.close();
}

TrainingData load_dataset(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) throw FormatError(path.string() + ": not a dataset file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw FormatError(path.string() + ": unsupported dataset format version " + std::to_string(version));
  const auto d_in = r.get<std::uint32_t>();
  const auto d_out = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  if (d_in == 0 || d_out == 0 || d_in > (1u << 20) || d_out > (1u << 20)) throw FormatError(path.string() + ": bad dims");
  const auto expected = static_cast<std::uintmax_t>(count) * (d_in + d_out) * sizeof(double);
  const auto header = sizeof kDatasetMagic + 3 * sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (std::filesystem::file_size(path) != header + expected) throw FormatError(path.string() + ": size does not match header");
  TrainingData data;
  data.features.resize(d_in, static_cast<Eigen::Index>(count));
  data.targets.resize(d_out, static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(count); ++c) {
    r.get_doubles(data.features.col(c).data(), d_in);
    r.get_doubles(data.targets.col(c).data(), d_out);
  }
  return data;
}

MlpModel train_model(const TrainingData& data, const Band& band, int e2p, int order, const TrainingHyper& hyper,
                     std::uint64_t seed, bool single_precision, TrainingReport* report) {
  if (data.features.rows() != feature_dim(order, e2p) || data.targets.rows() != target_dim(e2p))
    throw DimensionError("train_model: dataset dims do not match Q and N");
  MlpModel m;
  m.band = band;
  m.e2p = e2p;
  m.order = order;
  m.net = single_precision ? train_mlp<float>(data.features, data.targets, hyper, seed, report)
                           : train_mlp<double>(data.features, data.targets, hyper, seed, report);
  return m;
}

}  // namespace cfcep
