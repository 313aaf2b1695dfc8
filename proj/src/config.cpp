#include "cfcep/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace cfcep {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_tokens(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& t) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || !std::isfinite(v)) throw ConfigError("'" + t + "' is not a number");
  return v;
}

long long to_int(const std::string& t) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("'" + t + "' is not an integer");
  return v;
}

std::uint64_t to_u64(const std::string& t) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("'" + t + "' is not an unsigned integer");
  return v;
}

bool to_bool(const std::string& t) {
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + t + "' is not a boolean");
}

const std::string& single(const std::vector<std::string>& tokens) {
  if (tokens.size() != 1) throw ConfigError("expected exactly one value");
  return tokens.front();
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>)
      out += fmt(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::vector<std::string>&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CFCEP_INT(key, field)                                                                                  \
  Key {                                                                                                        \
    key, [](ExperimentConfig& c, const auto& t) { c.field = static_cast<int>(to_int(single(t))); },          \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                                    \
  }
#define CFCEP_REAL(key, field)                                                                                 \
  Key {                                                                                                        \
    key, [](ExperimentConfig& c, const auto& t) { c.field = to_double(single(t)); },                         \
        [](const ExperimentConfig& c) { return fmt(c.field); }                                               \
  }
#define CFCEP_BOOL(key, field)                                                                                 \
  Key {                                                                                                        \
    key, [](ExperimentConfig& c, const auto& t) { c.field = to_bool(single(t)); },                           \
        [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }                    \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      CFCEP_INT("M", aps),
      CFCEP_INT("K", users),
      CFCEP_REAL("area_side_m", area_side_m),
      CFCEP_INT("Q", order),
      CFCEP_INT("L", length),
      Key{"doppler",
          [](ExperimentConfig& c, const auto& t) {
            if (t.size() == 1) {
              c.doppler = DopplerSpec::fixed(to_double(t[0]));
            } else if (t.size() == 2 && t[0] == "fixed") {
              c.doppler = DopplerSpec::fixed(to_double(t[1]));
            } else if (t.size() == 3 && t[0] == "uniform") {
              c.doppler = DopplerSpec::uniform(to_double(t[1]), to_double(t[2]));
            } else {
              throw ConfigError("expected '<f_n>', 'fixed <f_n>' or 'uniform <lo> <hi>'");
            }
          },
          [](const ExperimentConfig& c) {
            return c.doppler.kind == DopplerSpec::Kind::Fixed ? "fixed " + fmt(c.doppler.lo)
                                                              : "uniform " + fmt(c.doppler.lo) + " " + fmt(c.doppler.hi);
          }},
      Key{"e2p",
          [](ExperimentConfig& c, const auto& t) {
            c.e2p.clear();
            for (const auto& s : t) c.e2p.push_back(static_cast<int>(to_int(s)));
          },
          [](const ExperimentConfig& c) { return join(c.e2p); }},
      Key{"schemes",
          [](ExperimentConfig& c, const auto& t) {
            c.schemes.clear();
            for (const auto& s : t) c.schemes.push_back(parse_scheme(s));
          },
          [](const ExperimentConfig& c) {
            std::string out;
            for (std::size_t i = 0; i < c.schemes.size(); ++i) out += (i ? ", " : "") + scheme_name(c.schemes[i]);
            return out;
          }},
      CFCEP_INT("tau", tau),
      Key{"tau_c",
          [](ExperimentConfig& c, const auto& t) {
            c.tau_c = single(t) == "auto" ? 0 : static_cast<int>(to_int(single(t)));
            if (single(t) != "auto" && c.tau_c <= 0) throw ConfigError("must be a positive integer or 'auto'");
          },
          [](const ExperimentConfig& c) { return c.tau_c > 0 ? std::to_string(c.tau_c) : std::string("auto"); }},
      CFCEP_REAL("bandwidth_hz", bandwidth_hz),
      CFCEP_REAL("carrier_mhz", large_scale.carrier_mhz),
      CFCEP_REAL("ap_height_m", large_scale.ap_height_m),
      CFCEP_REAL("user_height_m", large_scale.user_height_m),
      CFCEP_REAL("d0_m", large_scale.d0_m),
      CFCEP_REAL("d1_m", large_scale.d1_m),
      CFCEP_REAL("shadowing_db", large_scale.shadowing_db),
      CFCEP_REAL("rho_w", rho_w),
      CFCEP_REAL("p_d_w", p_d_w),
      CFCEP_REAL("noise_psd_dbw_hz", noise_psd_dbw_hz),
      CFCEP_INT("mc_realizations", mc_realizations),
      CFCEP_INT("deployments", deployments),
      CFCEP_INT("batches", batches),
      CFCEP_BOOL("predicted_only", predicted_only),
      Key{"seed", [](ExperimentConfig& c, const auto& t) { c.seed = to_u64(single(t)); },
          [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      Key{"models", [](ExperimentConfig& c, const auto& t) { c.models = single(t); },
          [](const ExperimentConfig& c) { return c.models; }},
      CFCEP_INT("train_traces", train_traces),
      CFCEP_REAL("train_snr_db", train_snr_db),
      CFCEP_REAL("train_snr_spread_db", train_snr_spread_db),
      CFCEP_INT("train_epochs", hyper.max_epochs),
      CFCEP_INT("train_patience", hyper.patience),
      CFCEP_INT("train_batch", hyper.batch_size),
      CFCEP_INT("train_width", hyper.hidden_width),
      CFCEP_INT("train_layers", hyper.hidden_layers),
      CFCEP_REAL("train_learning_rate", hyper.adam.learning_rate),
      CFCEP_REAL("train_validation", hyper.validation_fraction),
      CFCEP_REAL("train_leaky_slope", hyper.leaky_slope),
      CFCEP_BOOL("train_single_precision", train_single_precision),
      Key{"fn_grid",
          [](ExperimentConfig& c, const auto& t) {
            c.fn_grid.clear();
            for (const auto& s : t) c.fn_grid.push_back(to_double(s));
          },
          [](const ExperimentConfig& c) { return join(c.fn_grid); }},
      Key{"users_grid",
          [](ExperimentConfig& c, const auto& t) {
            c.users_grid.clear();
            for (const auto& s : t) c.users_grid.push_back(static_cast<int>(to_int(s)));
          },
          [](const ExperimentConfig& c) { return join(c.users_grid); }},
      Key{"aps_grid",
          [](ExperimentConfig& c, const auto& t) {
            c.aps_grid.clear();
            for (const auto& s : t) c.aps_grid.push_back(static_cast<int>(to_int(s)));
          },
          [](const ExperimentConfig& c) { return join(c.aps_grid); }},
  };
  return table;
}

#undef CFCEP_INT
#undef CFCEP_REAL
#undef CFCEP_BOOL

}  // namespace

double ExperimentConfig::noise_power_w() const { return std::pow(10.0, noise_psd_dbw_hz / 10.0) * bandwidth_hz; }

void ExperimentConfig::validate() const {
  auto fail = [this](const std::string& key, const std::string& msg) {
    const auto it = source_lines.find(key);
    const std::string where = it != source_lines.end() ? "line " + std::to_string(it->second) + ": " : "";
    throw ConfigError(where + key + ": " + msg);
  };
  if (aps < 1) fail("M", "must be at least 1");
  if (users < 1) fail("K", "must be at least 1");
  if (!(area_side_m > 0.0)) fail("area_side_m", "must be positive");
  if (order < 1) fail("Q", "must be at least 1");
  if (length < 1) fail("L", "must be at least 1");
  if (!(doppler.lo > 0.0) || doppler.hi > kMaxNormalizedDoppler || doppler.lo > doppler.hi)
    fail("doppler", "values must satisfy 0 < lo <= hi <= 0.2");
  if (doppler.kind == DopplerSpec::Kind::Uniform && doppler.lo == doppler.hi)
    fail("doppler", "uniform range is empty");
  if (e2p.empty()) fail("e2p", "needs at least one ratio");
  for (int n : e2p)
    if (n < 1) fail("e2p", "ratios must be at least 1");
  if (schemes.empty()) fail("schemes", "needs at least one scheme");
  if (tau < 1) fail("tau", "must be at least 1");
  if (pilot_length() < users) fail(tau_c > 0 ? "tau_c" : "K", "pilot length must be at least K for orthogonal pilots");
  if (pilot_length() > tau) fail(tau_c > 0 ? "tau_c" : "tau", "pilot length exceeds tau");
  if (!(bandwidth_hz > 0.0)) fail("bandwidth_hz", "must be positive");
  if (!(large_scale.carrier_mhz > 0.0)) fail("carrier_mhz", "must be positive");
  if (!(large_scale.ap_height_m > 0.0)) fail("ap_height_m", "must be positive");
  if (!(large_scale.user_height_m > 0.0)) fail("user_height_m", "must be positive");
  if (!(large_scale.d0_m > 0.0)) fail("d0_m", "must be positive");
  if (!(large_scale.d1_m > large_scale.d0_m)) fail("d1_m", "must exceed d0_m");
  if (large_scale.shadowing_db < 0.0) fail("shadowing_db", "must be non-negative");
  if (rho_w < 0.0) fail("rho_w", "must be non-negative");
  if (p_d_w < 0.0) fail("p_d_w", "must be non-negative");
  if (mc_realizations < 1) fail("mc_realizations", "must be at least 1");
  if (deployments < 1) fail("deployments", "must be at least 1");
  if (batches < 2) fail("batches", "must be at least 2");
  if (train_traces < 0) fail("train_traces", "must be non-negative");
  if (train_snr_spread_db < 0.0) fail("train_snr_spread_db", "must be non-negative");
  if (hyper.max_epochs < 1) fail("train_epochs", "must be at least 1");
  if (hyper.patience < 1) fail("train_patience", "must be at least 1");
  if (hyper.batch_size < 1) fail("train_batch", "must be at least 1");
  if (hyper.hidden_width < 1) fail("train_width", "must be at least 1");
  if (hyper.hidden_layers < 1) fail("train_layers", "must be at least 1");
  if (!(hyper.adam.learning_rate > 0.0)) fail("train_learning_rate", "must be positive");
  if (hyper.validation_fraction < 0.0 || hyper.validation_fraction >= 1.0) fail("train_validation", "must be in [0, 1)");
  if (hyper.leaky_slope < 0.0 || hyper.leaky_slope >= 1.0) fail("train_leaky_slope", "must be in [0, 1)");
  for (double f : fn_grid)
    if (!(f > 0.0) || f > kMaxNormalizedDoppler) fail("fn_grid", "values must be in (0, 0.2]");
  for (int k : users_grid) {
    if (k < 1) fail("users_grid", "values must be at least 1");
    if (tau_c > 0 && k > tau_c) fail("users_grid", "K exceeds the fixed pilot length tau_c");
    if (tau_c == 0 && k > tau) fail("users_grid", "K exceeds tau");
  }
  for (int m : aps_grid)
    if (m < 1) fail("aps_grid", "values must be at least 1");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return fingerprint(to_text()); }

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string name = trim(line.substr(0, eq));
    const auto tokens = split_tokens(trim(line.substr(eq + 1)));
    const Key* key = nullptr;
    for (const auto& k : keys())
      if (name == k.name) key = &k;
    if (!key) throw ConfigError(where + "unknown key '" + name + "'");
    if (cfg.source_lines.count(name)) throw ConfigError(where + name + ": duplicate key");
    if (tokens.empty()) throw ConfigError(where + name + ": missing value");
    try {
      key->set(cfg, tokens);
    } catch (const ConfigError& e) {
      throw ConfigError(where + name + ": " + e.what());
    }
    cfg.source_lines[name] = number;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cfcep
