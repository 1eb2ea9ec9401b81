#include "latentdx/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace latentdx {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double poisson_log_pmf(int y, double mean) {
  if (mean <= 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return y * std::log(mean) - mean - log_gamma(y + 1.0);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  std::vector<double> p(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(log_weights[i] - top);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - top);
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    u -= std::exp(log_weights[i] - top);
    if (u < 0.0) return i;
  }
  // Rounding left u marginally positive; return the last non-negligible entry.
  for (std::size_t i = log_weights.size(); i-- > 0;)
    if (std::isfinite(log_weights[i])) return i;
  return log_weights.size() - 1;
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double sample_gamma(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng,
                                     double floor) {
  const std::size_t n = concentration.size();
  std::vector<double> logs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = concentration[i];
    if (a >= 1.0) {
      logs[i] = std::log(std::gamma_distribution<double>(a, 1.0)(rng));
    } else {
      // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space.
      const double g = std::gamma_distribution<double>(a + 1.0, 1.0)(rng);
      double u = uniform01(rng);
      while (u <= 0.0) u = uniform01(rng);
      logs[i] = std::log(g) + std::log(u) / a;
    }
  }
  std::vector<double> x = normalize_log_weights(logs);
  bool lifted = false;
  for (double& v : x) {
    if (!(v >= floor)) {
      v = floor;
      lifted = true;
    }
  }
  if (lifted) {
    double total = 0.0;
    for (double v : x) total += v;
    for (double& v : x) v /= total;
  }
  return x;
}

double dirichlet_log_pdf(std::span<const double> x, std::span<const double> concentration) {
  double total = 0.0;
  double out = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += concentration[i];
    out += (concentration[i] - 1.0) * std::log(x[i]) - log_gamma(concentration[i]);
  }
  return out + log_gamma(total);
}

}  // namespace latentdx
