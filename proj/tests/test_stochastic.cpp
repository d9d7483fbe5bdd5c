#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stovar/stochastic.hpp"

using namespace stovar;

namespace {

double simpson(double (*f)(double, double), double s, double a, double b) {
  const double m = 0.5 * (a + b);
  return (b - a) / 6.0 * (f(s, a) + 4.0 * f(s, m) + f(s, b));
}

double adaptive(double (*f)(double, double), double s, double a, double b,
                double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double left = simpson(f, s, a, m);
  const double right = simpson(f, s, m, b);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive(f, s, a, m, left, tol / 2.0, depth - 1) +
         adaptive(f, s, m, b, right, tol / 2.0, depth - 1);
}

double gamma_integrand(double s, double t) {
  return std::pow(t, s - 1.0) * std::exp(-t);
}

/// Quadrature oracle for the upper incomplete gamma integral.
double upper_gamma_quadrature(double s, double x) {
  const double hi = std::max(x, s) + 60.0;
  const double lo = std::max(x, 1e-12);  // integrable singularity guard for s < 1
  return adaptive(gamma_integrand, s, lo, hi,
                  simpson(gamma_integrand, s, lo, hi), 1e-13, 40);
}

double weibull_cdf(double x, double kappa, double lambda) {
  if (x <= 0.0) return 0.0;
  return 1.0 - std::exp(-std::pow(x / lambda, kappa));
}

}  // namespace

TEST_CASE("ou_from_sigma reproduces the diffusion arithmetic") {
  const sde::OuSpec slow = sde::ou_from_sigma(0.01, 0.0, 0.05);
  CHECK(slow.b == doctest::Approx(7.0710678e-3).epsilon(1e-7));
  CHECK(sde::stationary_sigma(slow) == doctest::Approx(0.05).epsilon(1e-13));

  CHECK(sde::ou_from_sigma(0.7, 1.0, 0.0).b == 0.0);
  // 2 alpha = 1: b equals sigma.
  CHECK(sde::ou_from_sigma(0.5, 0.0, 0.1).b == doctest::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("OU drift is linear mean reversion") {
  sde::OuSpec ou;
  ou.alpha = 0.01;
  ou.mu = 1.0;
  ou.b = 0.1;
  CHECK(sde::drift(ou, ou.mu) == 0.0);
  CHECK(sde::drift(ou, 0.9) == doctest::Approx(0.001).epsilon(1e-14));
  CHECK(sde::diffusion(ou, -5.0) == 0.1);  // constant in eta
  CHECK(sde::stationary_mean(ou) == 1.0);
}

TEST_CASE("Weibull drift vanishes at the implied mean") {
  const sde::WeibullSpec wb = sde::make_weibull(0.01, 2.0, 1.0);
  CHECK(wb.mu_w == doctest::Approx(0.8862269255).epsilon(1e-9));
  CHECK(sde::drift(wb, wb.mu_w) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(sde::stationary_mean(wb) == wb.mu_w);
}

TEST_CASE("Weibull stationary sigma matches the moment formula") {
  const double kappa = 2.0, lambda = 1.0;
  const sde::WeibullSpec wb = sde::make_weibull(0.01, kappa, lambda);
  const double m1 = sde::gamma_fn(1.0 + 1.0 / kappa);
  const double m2 = sde::gamma_fn(1.0 + 2.0 / kappa);
  CHECK(sde::stationary_sigma(wb) ==
        doctest::Approx(lambda * std::sqrt(m2 - m1 * m1)).epsilon(1e-12));
}

TEST_CASE("Weibull diffusion cross-checked against an independent evaluation") {
  const double alpha_w = 0.01, kappa = 2.0, lambda = 1.0;
  const sde::WeibullSpec wb = sde::make_weibull(alpha_w, kappa, lambda);
  const double eta = wb.mu_w;

  const double c1 = 1.0 / kappa;
  const double c2 = eta / lambda;
  const double c2k = std::pow(c2, kappa);
  const double b1 = 2.0 * alpha_w * eta * c1 * (lambda / kappa) * std::pow(c2, -kappa);
  const double b2 = kappa * std::exp(c2k) * upper_gamma_quadrature(1.0 + c1, c2k) -
                    std::sqrt(M_PI);  // Gamma(1/2) exactly
  const double oracle = std::sqrt(b1 * b2);
  CHECK(sde::diffusion(wb, eta) == doctest::Approx(oracle).epsilon(1e-9));

  // b1 is proportional to alpha_w, so b_w scales with its square root.
  const sde::WeibullSpec wb4 = sde::make_weibull(4.0 * alpha_w, kappa, lambda);
  CHECK(sde::diffusion(wb4, eta) ==
        doctest::Approx(2.0 * sde::diffusion(wb, eta)).epsilon(1e-12));
}

TEST_CASE("Weibull diffusion rejects non-positive eta") {
  const sde::WeibullSpec wb = sde::make_weibull(0.01, 2.0, 1.0);
  CHECK_THROWS_AS(sde::diffusion(wb, 0.0), DomainError);
  CHECK_THROWS_AS(sde::diffusion(wb, -0.1), DomainError);
}

TEST_CASE("gamma function identities") {
  CHECK(sde::gamma_fn(1.0) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(sde::gamma_fn(5.0) == doctest::Approx(24.0).epsilon(1e-13));
  CHECK(sde::gamma_fn(0.5) == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-13));
  CHECK(sde::gamma_fn(1.5) == doctest::Approx(0.8862269255).epsilon(1e-9));
}

TEST_CASE("upper incomplete gamma limits and identities") {
  CHECK(sde::upper_incomplete_gamma(0.7, 0.0) ==
        doctest::Approx(sde::gamma_fn(0.7)).epsilon(1e-12));
  for (double x : {0.1, 1.0, 3.0, 10.0})
    CHECK(sde::upper_incomplete_gamma(1.0, x) ==
          doctest::Approx(std::exp(-x)).epsilon(1e-12));
}

TEST_CASE("upper incomplete gamma matches adaptive quadrature") {
  for (double s : {0.5, 0.7, 1.5, 2.3, 4.0}) {
    for (double x : {0.2, 0.7853981633974483, 1.0, 2.5, 8.0}) {
      const double oracle = upper_gamma_quadrature(s, x);
      CHECK(sde::upper_incomplete_gamma(s, x) ==
            doctest::Approx(oracle).epsilon(1e-9));
    }
  }
}

TEST_CASE("scaled upper incomplete gamma stays representable for large x") {
  const double s = 1.5, x = 800.0;
  // e^x Gamma(s, x) ~ x^(s-1) for large x.
  const double scaled = sde::upper_incomplete_gamma_scaled(s, x);
  CHECK(scaled == doctest::Approx(std::pow(x, s - 1.0)).epsilon(1e-2));
  CHECK(std::isfinite(scaled));
}

TEST_CASE("em_step fixed point and deterministic Euler") {
  sde::OuSpec ou;
  ou.alpha = 0.8;
  ou.mu = 2.0;
  ou.b = 0.3;
  CHECK(sde::em_step(ou, ou.mu, 0.01, 0.0) == ou.mu);
  const double eta = 1.5, h = 0.02;
  CHECK(sde::em_step(ou, eta, h, 0.0) == eta + ou.alpha * (ou.mu - eta) * h);
}

TEST_CASE("em_step keeps a Weibull state inside the diffusion domain") {
  const sde::WeibullSpec wb = sde::make_weibull(0.5, 2.0, 1.0);
  double eta = 0.05;
  for (int k = 0; k < 50; ++k) {
    eta = sde::em_step(wb, eta, 0.1, -2.0);  // violently negative increments
    CHECK(eta >= 1e-9 * wb.lambda);
  }
}

TEST_CASE("em ensemble started at stationarity keeps the stationary variance") {
  sde::OuSpec ou;
  ou.alpha = 0.5;
  ou.mu = 1.0;
  ou.b = 0.3;
  const sde::ProcessSpec spec = ou;
  const double sigma2 = ou.b * ou.b / (2.0 * ou.alpha);
  const double h = 0.01;
  const int n = 100000;
  const std::uint64_t key = sde::stream_key(99, 0, 0);
  const std::uint64_t key2 = sde::stream_key(99, 1, 0);
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double start = ou.mu + std::sqrt(sigma2) * sde::normal_draw(key, i);
    const double dw = std::sqrt(h) * sde::normal_draw(key2, i);
    const double eta = sde::em_step(spec, start, h, dw);
    sum += eta;
    sumsq += eta * eta;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  const double se = sigma2 * std::sqrt(2.0 / (n - 1.0));
  CHECK(std::abs(var - sigma2) < 3.0 * se);
  CHECK(std::abs(mean - ou.mu) < 4.0 * std::sqrt(sigma2 / n));
}

TEST_CASE("counter streams are deterministic and key-separated") {
  const Vector a = sde::wiener_increments(7, 3, 1, 64, 0.01);
  const Vector b = sde::wiener_increments(7, 3, 1, 64, 0.01);
  CHECK((a - b).norm() == 0.0);
  const Vector c = sde::wiener_increments(7, 4, 1, 64, 0.01);
  const Vector d = sde::wiener_increments(7, 3, 2, 64, 0.01);
  const Vector e = sde::wiener_increments(8, 3, 1, 64, 0.01);
  CHECK((a - c).norm() > 0.0);
  CHECK((a - d).norm() > 0.0);
  CHECK((a - e).norm() > 0.0);
  CHECK(sde::stream_key(1, 2, 3) != sde::stream_key(1, 3, 2));
  CHECK(sde::stream_key(1, 2, 3) != sde::stream_key(3, 2, 1));
}

TEST_CASE("wiener increments have the contracted moments") {
  const double h = 0.01;
  const Eigen::Index n = 1000000;
  const Vector w = sde::wiener_increments(2024, 0, 0, n, h);
  const double mean = w.mean();
  const double var = (w.array() - mean).square().sum() / (n - 1.0);
  CHECK(std::abs(mean) < 4.0 * std::sqrt(h) / std::sqrt(double(n)));
  CHECK(std::abs(var - h) < 0.01 * h);
}

TEST_CASE("distinct processes give uncorrelated streams") {
  const Eigen::Index n = 100000;
  const Vector a = sde::wiener_increments(2024, 5, 0, n, 1.0);
  const Vector b = sde::wiener_increments(2024, 5, 1, n, 1.0);
  const Vector c = sde::wiener_increments(2024, 6, 0, n, 1.0);
  const double corr_ab = (a.dot(b) / n) / std::sqrt((a.squaredNorm() / n) *
                                                    (b.squaredNorm() / n));
  const double corr_ac = (a.dot(c) / n) / std::sqrt((a.squaredNorm() / n) *
                                                    (c.squaredNorm() / n));
  CHECK(std::abs(corr_ab) < 0.02);
  CHECK(std::abs(corr_ac) < 0.02);
}

TEST_CASE("uniform01 stays strictly inside the unit interval") {
  const std::uint64_t key = sde::stream_key(5, 5, 5);
  for (std::uint64_t k = 0; k < 10000; ++k) {
    const double u = sde::uniform01(key, k);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("long Weibull trajectory passes a stationarity KS test") {
  const double alpha_w = 0.01, kappa = 2.0, lambda = 1.0;
  const sde::WeibullSpec wb = sde::make_weibull(alpha_w, kappa, lambda);
  const double h = 0.05;
  const double t_f = 20000.0;
  const double sample_every = 10.0;
  const long steps = std::lround(t_f / h);
  const long stride = std::lround(sample_every / h);

  const Vector dw = sde::wiener_increments(31337, 0, 0, steps, h);
  std::vector<double> samples;
  double eta = wb.mu_w;
  for (long k = 0; k < steps; ++k) {
    eta = sde::em_step(wb, eta, h, dw[k]);
    if ((k + 1) % stride == 0) samples.push_back(eta);
  }
  REQUIRE(samples.size() == 2000);

  std::sort(samples.begin(), samples.end());
  double d_stat = 0.0;
  const double n = static_cast<double>(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const double cdf = weibull_cdf(samples[i], kappa, lambda);
    d_stat = std::max(d_stat, std::abs(cdf - (i + 1) / n));
    d_stat = std::max(d_stat, std::abs(cdf - i / n));
  }
  // 1% critical value 1.63/sqrt(n_eff); correlated samples at 10 s spacing
  // with a 100 s correlation time leave roughly n/20 effective points.
  const double n_eff = n * (1.0 - std::exp(-alpha_w * sample_every)) /
                       (1.0 + std::exp(-alpha_w * sample_every));
  CHECK(d_stat < 1.63 / std::sqrt(n_eff));
}
