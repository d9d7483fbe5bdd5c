#pragma once

#include "stovar/types.hpp"

#include <cstdint>
#include <variant>

namespace stovar::sde {

/// Ornstein-Uhlenbeck process  d eta = alpha (mu - eta) dt + b dW.
/// Stationary distribution N(mu, b^2 / (2 alpha)).
struct OuSpec {
  double alpha = 0.0;  // mean-reversion rate [1/s], > 0
  double mu = 0.0;     // stationary mean
  double b = 0.0;      // diffusion amplitude, >= 0
};

/// Mean-reverting process with state-dependent diffusion chosen so the
/// stationary density is Weibull(kappa, lambda):
///   d eta = alpha_w (mu_w - eta) dt + b_w(eta) dW,   mu_w = lambda Gamma(1 + 1/kappa)
///   b_w(eta)^2 = b_1(eta) b_2(eta)
///   b_1 = 2 alpha_w eta c_1 (lambda/kappa) c_2^-kappa
///   b_2 = kappa e^{c_2^kappa} Gamma(1 + c_1, c_2^kappa) - Gamma(c_1)
/// with c_1 = 1/kappa, c_2 = eta/lambda and Gamma(.,.) the upper incomplete
/// gamma function.
struct WeibullSpec {
  double alpha_w = 0.0;  // mean-reversion rate [1/s], > 0
  double kappa = 0.0;    // shape, > 0
  double lambda = 0.0;   // scale, > 0
  double mu_w = 0.0;     // lambda Gamma(1 + 1/kappa); filled by make_weibull
};

using ProcessSpec = std::variant<OuSpec, WeibullSpec>;

struct NoiseProcess {
  std::string tag;
  ProcessSpec spec;
};

/// Ordered list of the model's noise processes plus the root seed that keys
/// every Wiener stream drawn for them.
struct NoiseBank {
  std::vector<NoiseProcess> processes;
  std::uint64_t root_seed = 0;

  int size() const { return static_cast<int>(processes.size()); }
  int index_of(const std::string& tag) const;  // -1 when absent
};

/// OU spec from a target stationary standard deviation: b = sigma sqrt(2 alpha).
OuSpec ou_from_sigma(double alpha, double mu, double sigma);

/// Weibull spec with mu_w computed and parameters validated.
WeibullSpec make_weibull(double alpha_w, double kappa, double lambda);

/// Drift a(eta) of a process.
double drift(const ProcessSpec& spec, double eta);

/// Diffusion b(eta) of a process. Weibull diffusion throws DomainError for
/// eta <= 0 (the process itself is kept away from 0 by the em_step floor).
double diffusion(const ProcessSpec& spec, double eta);

/// Stationary mean of a process (mu, respectively mu_w).
double stationary_mean(const ProcessSpec& spec);

/// Stationary standard deviation (exact for both process kinds).
double stationary_sigma(const ProcessSpec& spec);

/// One Euler-Maruyama step eta + a(eta) h + b(eta) dW. Weibull states are
/// floored at 1e-9 lambda to keep the diffusion inside its domain.
double em_step(const ProcessSpec& spec, double eta, double h, double dW);

// === Gamma functions =======================================================

/// Gamma(x) for x > 0.
double gamma_fn(double x);

/// Upper incomplete gamma Gamma(s, x) for s > 0, x >= 0. Series for the
/// lower integral when x < s + 1, continued fraction otherwise.
double upper_incomplete_gamma(double s, double x);

/// e^x Gamma(s, x); stays representable for large x where Gamma(s, x)
/// underflows and e^x overflows separately.
double upper_incomplete_gamma_scaled(double s, double x);

// === Counter-based noise streams ===========================================

/// Stateless counter-based stream: every (root_seed, realization, process,
/// counter) tuple maps to one uniform draw, so streams are reproducible and
/// independent of scheduling or worker count.
std::uint64_t stream_key(std::uint64_t root_seed, std::uint64_t realization,
                         std::uint64_t process);

/// Uniform draw in (0, 1) at a counter position of a keyed stream.
double uniform01(std::uint64_t key, std::uint64_t counter);

/// Standard normal draw at a step index (Box-Muller over two counters).
double normal_draw(std::uint64_t key, std::uint64_t step);

/// i.i.d. N(0, h) Wiener increments for one process of one realization.
Vector wiener_increments(std::uint64_t root_seed, std::uint64_t realization,
                         std::uint64_t process, Eigen::Index count, double h);

}  // namespace stovar::sde
