#include "cfcep/channel_model.hpp"

#include <cmath>
#include <numbers>

namespace cfcep {

double bessel_j0(double x) {
  if (!std::isfinite(x)) throw DomainError("bessel_j0: non-finite argument");
  return std::cyl_bessel_j(0.0, std::abs(x));
}

double acf(double f_n, long lag) {
  if (!(f_n >= 0.0)) throw DomainError("acf: normalized Doppler must be non-negative");
  return bessel_j0(2.0 * std::numbers::pi * f_n * static_cast<double>(std::labs(lag)));
}

double AgingProfile::yule_walker_residual() const {
  double worst = 0.0;
  for (int i = 0; i < order; ++i) {
    double r = acf(i + 1);
    for (int j = 0; j < order; ++j) r += acf(std::abs(i - j)) * coeffs(j);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

bool is_minimum_phase(const Eigen::VectorXd& coeffs) {
  Eigen::VectorXd p = coeffs;
  while (p.size() > 0) {
    const Eigen::Index n = p.size();
    const double k = p(n - 1);
    if (!(std::abs(k) < 1.0)) return false;
    Eigen::VectorXd next(n - 1);
    for (Eigen::Index i = 0; i < n - 1; ++i) next(i) = (p(i) - k * p(n - 2 - i)) / (1.0 - k * k);
    p = std::move(next);
  }
  return true;
}

std::vector<double> green_function(const Eigen::VectorXd& coeffs, double rel_tol,
                                   std::size_t max_terms) {
  const std::size_t q = static_cast<std::size_t>(coeffs.size());
  const std::size_t window = std::max<std::size_t>(q, 1);
  std::vector<double> f;
  f.reserve(4096);
  f.push_back(1.0);
  double total = 1.0;
  double recent = 1.0;  // energy of the last `window` terms
  for (std::size_t j = 1; j < max_terms; ++j) {
    double v = 0.0;
    const std::size_t lim = std::min(j, q);
    for (std::size_t i = 1; i <= lim; ++i) v -= coeffs(static_cast<Eigen::Index>(i - 1)) * f[j - i];
    if (!std::isfinite(v) || std::abs(v) > 1e150)
      throw NumericalError("green_function: recursion diverges (non-stationary AR fit)");
    f.push_back(v);
    total += v * v;
    recent += v * v;
    if (j >= window) recent -= f[j - window] * f[j - window];
    if (j > q && recent < rel_tol * total) break;
  }
  return f;
}

double stationary_variance(const AgingProfile& profile) {
  if (profile.innovation_var == 0.0) return 0.0;
  if (!is_minimum_phase(profile.coeffs))
    throw NumericalError("stationary_variance: AR polynomial is not minimum phase");
  const auto f = green_function(profile.coeffs);
  double energy = 0.0;
  for (double v : f) energy += v * v;
  return energy * profile.innovation_var;
}

namespace {

Eigen::VectorXd acf_vector(double f_n, int order) {
  Eigen::VectorXd r(order + 1);
  for (int l = 0; l <= order; ++l) r(l) = acf(f_n, l);
  return r;
}

Eigen::MatrixXd toeplitz(const Eigen::VectorXd& r, int n) {
  Eigen::MatrixXd t(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t(i, j) = r(std::abs(i - j));
  return t;
}

}  // namespace

AgingProfile fit_ar(double f_n, int order) {
  if (order < 1) throw DomainError("fit_ar: AR order must be >= 1");
  if (!(f_n > 0.0) || !std::isfinite(f_n)) throw DomainError("fit_ar: normalized Doppler must be > 0");

  AgingProfile p;
  p.f_n = f_n;
  p.order = order;
  p.acf = acf_vector(f_n, order);
  const Eigen::MatrixXd r = toeplitz(p.acf, order);
  const Eigen::VectorXd u = p.acf.tail(order);

  auto innovation = [&](const Eigen::VectorXd& a) { return p.acf(0) + a.dot(u); };
  auto acceptable = [&](const Eigen::VectorXd& a) {
    return a.allFinite() && is_minimum_phase(a) && innovation(a) > 0.0;
  };

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(r);
  Eigen::VectorXd a = -lu.solve(u);
  bool ok = lu.rcond() >= 1e-12 && acceptable(a);
  if (!ok) {
    for (double eps = 1e-12; eps <= 1.0001e-6; eps *= 10.0) {
      const Eigen::MatrixXd loaded =
          r + eps * p.acf(0) * Eigen::MatrixXd::Identity(order, order);
      a = -loaded.partialPivLu().solve(u);
      if (acceptable(a)) {
        p.loading = eps;
        ok = true;
        break;
      }
    }
  }
  if (!ok) throw NumericalError("fit_ar: Yule-Walker system could not be stabilized by diagonal loading");

  p.coeffs = a;
  p.innovation_var = innovation(a);
  p.stationary_var = stationary_variance(p);
  return p;
}

TraceGenerator::TraceGenerator(const AgingProfile& profile) : profile_(profile) {
  const int q = profile.order;
  state_factor_ = Eigen::MatrixXd::Zero(q, q);
  if (profile.innovation_var <= 0.0) return;

  // Autocovariance of the fitted model itself, r[l] = sigma_w^2 sum_j F_j F_{j+l}.
  const auto f = green_function(profile.coeffs);
  Eigen::VectorXd cov(q);
  for (int l = 0; l < q; ++l) {
    double s = 0.0;
    for (std::size_t j = 0; j + l < f.size(); ++j) s += f[j] * f[j + l];
    cov(l) = s * profile.innovation_var;
  }
  const Eigen::MatrixXd c = toeplitz(cov, q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  const Eigen::VectorXd sd = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  state_factor_ = eig.eigenvectors() * sd.asDiagonal();
}

void TraceGenerator::generate_link(std::uint64_t link_seed, Eigen::Ref<Eigen::VectorXcd> out) const {
  const int q = profile_.order;
  const Eigen::Index length = out.size();
  const int burn_in = 10 * q;
  Rng rng(link_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // state(i) = h[l-1-i]; circular buffer with `head` pointing at the most recent sample.
  Eigen::VectorXd zr(q), zi(q);
  for (int i = 0; i < q; ++i) {
    zr(i) = normal(rng);
    zi(i) = normal(rng);
  }
  const Eigen::VectorXd sr = state_factor_ * zr * std::sqrt(0.5);
  const Eigen::VectorXd si = state_factor_ * zi * std::sqrt(0.5);
  std::vector<cplx> buf(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) buf[static_cast<std::size_t>(q - 1 - i)] = {sr(i), si(i)};
  std::size_t head = static_cast<std::size_t>(q - 1);

  const double sw = std::sqrt(profile_.innovation_var / 2.0);
  const double* a = profile_.coeffs.data();
  for (Eigen::Index l = -burn_in; l < length; ++l) {
    double re = 0.0, im = 0.0;
    std::size_t idx = head;
    for (int k = 0; k < q; ++k) {
      re -= a[k] * buf[idx].real();
      im -= a[k] * buf[idx].imag();
      idx = idx == 0 ? static_cast<std::size_t>(q - 1) : idx - 1;
    }
    const double wr = normal(rng);
    const double wi = normal(rng);
    const cplx h{re + sw * wr, im + sw * wi};
    head = head + 1 == static_cast<std::size_t>(q) ? 0 : head + 1;
    buf[head] = h;
    if (l >= 0) out(l) = h;
  }
}

Eigen::MatrixXcd TraceGenerator::generate(int n_links, int length, std::uint64_t seed) const {
  if (length < 1) throw DomainError("generate_trace: length must be >= 1");
  if (n_links < 0) throw DomainError("generate_trace: negative link count");
  Eigen::MatrixXcd out(length, n_links);
  for (int i = 0; i < n_links; ++i)
    generate_link(derive_seed(seed, {static_cast<std::uint64_t>(i)}), out.col(i));
  return out;
}

Eigen::MatrixXcd generate_trace(const AgingProfile& profile, int n_links, int length,
                                std::uint64_t seed) {
  return TraceGenerator(profile).generate(n_links, length, seed);
}

double LargeScaleModel::hata_constant_db() const {
  const double lf = std::log10(carrier_mhz);
  return 46.3 + 33.9 * lf - 13.82 * std::log10(ap_height_m) -
         (1.1 * lf - 0.7) * user_height_m + (1.56 * lf - 0.8);
}

double LargeScaleModel::path_gain_db(double distance_m) const {
  const double l = hata_constant_db();
  const double d = distance_m / 1000.0;
  const double d0 = d0_m / 1000.0;
  const double d1 = d1_m / 1000.0;
  if (d > d1) return -l - 35.0 * std::log10(d);
  if (d > d0) return -l - 15.0 * std::log10(d1) - 20.0 * std::log10(d);
  return -l - 15.0 * std::log10(d1) - 20.0 * std::log10(d0);
}

Eigen::MatrixXd large_scale_gains(const Eigen::Matrix2Xd& aps, const Eigen::Matrix2Xd& users,
                                  const LargeScaleModel& model, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd beta(aps.cols(), users.cols());
  for (Eigen::Index k = 0; k < users.cols(); ++k) {
    for (Eigen::Index m = 0; m < aps.cols(); ++m) {
      const double d = (aps.col(m) - users.col(k)).norm();
      double db = model.path_gain_db(d);
      const double z = normal(rng);
      if (d > model.d1_m) db += model.shadowing_db * z;
      beta(m, k) = std::pow(10.0, db / 10.0);
    }
  }
  return beta;
}

Deployment make_deployment(int aps, int users, double area_side, const DopplerSpec& doppler,
                           std::uint64_t seed, const LargeScaleModel& model) {
  if (aps < 1 || users < 1) throw DomainError("make_deployment: need at least one AP and one user");
  if (!(area_side > 0.0)) throw DomainError("make_deployment: area side must be positive");
  if (!(doppler.lo >= 0.0) || doppler.hi < doppler.lo || doppler.hi > kMaxNormalizedDoppler)
    throw DomainError("make_deployment: Doppler range must lie within [0, 0.2]");

  Deployment dep;
  dep.area_side = area_side;
  dep.seed = seed;
  Rng place(derive_seed(seed, {1}));
  std::uniform_real_distribution<double> pos(0.0, area_side);
  dep.ap_positions.resize(2, aps);
  dep.user_positions.resize(2, users);
  for (int m = 0; m < aps; ++m) dep.ap_positions.col(m) << pos(place), pos(place);
  for (int k = 0; k < users; ++k) dep.user_positions.col(k) << pos(place), pos(place);

  Rng shadow(derive_seed(seed, {2}));
  dep.beta = large_scale_gains(dep.ap_positions, dep.user_positions, model, shadow);

  Rng mob(derive_seed(seed, {3}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  dep.doppler.resize(users);
  for (int k = 0; k < users; ++k) {
    // hi - u*(hi-lo) with u in [0,1) lands in (lo, hi]
    dep.doppler(k) = doppler.kind == DopplerSpec::Kind::Fixed
                         ? doppler.lo
                         : doppler.hi - unit(mob) * (doppler.hi - doppler.lo);
  }
  return dep;
}

}  // namespace cfcep
