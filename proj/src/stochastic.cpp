#include "stovar/stochastic.hpp"

#include <cmath>
#include <limits>

namespace stovar::sde {

namespace {
constexpr double kFpMin = 1e-290;
constexpr double kEps = std::numeric_limits<double>::epsilon();

/// Sum of the regularized series for the lower incomplete gamma, i.e.
/// gamma(s, x) = x^s e^-x * series(s, x).
double lower_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int n = 1; n < 500; ++n) {
    term *= x / (s + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) return sum;
  }
  throw NoConvergence("upper_incomplete_gamma: series failed to converge");
}

/// Continued fraction h with Gamma(s, x) = e^-x x^s h (modified Lentz).
double upper_cf(double s, double x) {
  double b = x + 1.0 - s;
  double c = 1.0 / kFpMin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = b + an / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NoConvergence("upper_incomplete_gamma: continued fraction failed to converge");
}
}  // namespace

double gamma_fn(double x) {
  if (!(x > 0.0)) throw DomainError("gamma_fn: requires x > 0");
  return std::tgamma(x);
}

double upper_incomplete_gamma(double s, double x) {
  if (!(s > 0.0)) throw DomainError("upper_incomplete_gamma: requires s > 0");
  if (!(x >= 0.0)) throw DomainError("upper_incomplete_gamma: requires x >= 0");
  if (x == 0.0) return gamma_fn(s);
  if (x < s + 1.0) return gamma_fn(s) - std::pow(x, s) * std::exp(-x) * lower_series(s, x);
  return std::exp(-x + s * std::log(x)) * upper_cf(s, x);
}

double upper_incomplete_gamma_scaled(double s, double x) {
  if (!(s > 0.0)) throw DomainError("upper_incomplete_gamma: requires s > 0");
  if (!(x >= 0.0)) throw DomainError("upper_incomplete_gamma: requires x >= 0");
  if (x == 0.0) return gamma_fn(s);
  if (x < s + 1.0)
    return std::exp(x) * gamma_fn(s) - std::pow(x, s) * lower_series(s, x);
  return std::exp(s * std::log(x)) * upper_cf(s, x);
}

OuSpec ou_from_sigma(double alpha, double mu, double sigma) {
  require(alpha > 0.0, "ou_from_sigma: alpha must be > 0");
  require(sigma >= 0.0, "ou_from_sigma: sigma must be >= 0");
  require(std::isfinite(mu), "ou_from_sigma: mu must be finite");
  return OuSpec{alpha, mu, sigma * std::sqrt(2.0 * alpha)};
}

WeibullSpec make_weibull(double alpha_w, double kappa, double lambda) {
  require(alpha_w > 0.0, "make_weibull: alpha_w must be > 0");
  require(kappa > 0.0, "make_weibull: kappa must be > 0");
  require(lambda > 0.0, "make_weibull: lambda must be > 0");
  WeibullSpec spec{alpha_w, kappa, lambda, 0.0};
  spec.mu_w = lambda * gamma_fn(1.0 + 1.0 / kappa);
  return spec;
}

int NoiseBank::index_of(const std::string& tag) const {
  for (size_t i = 0; i < processes.size(); ++i)
    if (processes[i].tag == tag) return static_cast<int>(i);
  return -1;
}

double drift(const ProcessSpec& spec, double eta) {
  if (const auto* ou = std::get_if<OuSpec>(&spec)) return ou->alpha * (ou->mu - eta);
  const auto& w = std::get<WeibullSpec>(spec);
  return w.alpha_w * (w.mu_w - eta);
}

double diffusion(const ProcessSpec& spec, double eta) {
  if (const auto* ou = std::get_if<OuSpec>(&spec)) return ou->b;
  const auto& w = std::get<WeibullSpec>(spec);
  if (!(eta > 0.0)) throw DomainError("diffusion: Weibull diffusion requires eta > 0");
  const double c1 = 1.0 / w.kappa;
  const double c2 = eta / w.lambda;
  const double c = std::pow(c2, w.kappa);
  const double b1 = 2.0 * w.alpha_w * eta * c1 * (w.lambda / w.kappa) * std::pow(c2, -w.kappa);
  const double b2 = w.kappa * upper_incomplete_gamma_scaled(1.0 + c1, c) - gamma_fn(c1);
  const double prod = b1 * b2;
  return prod > 0.0 ? std::sqrt(prod) : 0.0;
}

double stationary_mean(const ProcessSpec& spec) {
  if (const auto* ou = std::get_if<OuSpec>(&spec)) return ou->mu;
  return std::get<WeibullSpec>(spec).mu_w;
}

double stationary_sigma(const ProcessSpec& spec) {
  if (const auto* ou = std::get_if<OuSpec>(&spec))
    return ou->b / std::sqrt(2.0 * ou->alpha);
  const auto& w = std::get<WeibullSpec>(spec);
  const double g1 = gamma_fn(1.0 + 1.0 / w.kappa);
  const double g2 = gamma_fn(1.0 + 2.0 / w.kappa);
  return w.lambda * std::sqrt(std::max(0.0, g2 - g1 * g1));
}

double em_step(const ProcessSpec& spec, double eta, double h, double dW) {
  require(h > 0.0, "em_step: h must be > 0");
  double next = eta + drift(spec, eta) * h + diffusion(spec, eta) * dW;
  if (const auto* w = std::get_if<WeibullSpec>(&spec)) {
    const double floor = 1e-9 * w->lambda;
    if (next < floor) next = floor;
  }
  return next;
}

// === Counter-based noise streams ===========================================

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t stream_key(std::uint64_t root_seed, std::uint64_t realization,
                         std::uint64_t process) {
  std::uint64_t k = mix64(root_seed ^ 0x243F6A8885A308D3ULL);
  k = mix64(k ^ (realization + 0x452821E638D01377ULL));
  k = mix64(k ^ (process + 0x13198A2E03707344ULL));
  return k;
}

double uniform01(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = mix64(key + counter * kGamma);
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double normal_draw(std::uint64_t key, std::uint64_t step) {
  const double u1 = uniform01(key, 2 * step);
  const double u2 = uniform01(key, 2 * step + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vector wiener_increments(std::uint64_t root_seed, std::uint64_t realization,
                         std::uint64_t process, Eigen::Index count, double h) {
  require(h > 0.0, "wiener_increments: h must be > 0");
  require(count >= 0, "wiener_increments: count must be >= 0");
  const std::uint64_t key = stream_key(root_seed, realization, process);
  const double scale = std::sqrt(h);
  Vector out(count);
  for (Eigen::Index k = 0; k < count; ++k)
    out[k] = scale * normal_draw(key, static_cast<std::uint64_t>(k));
  return out;
}

}  // namespace stovar::sde
