#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace latentdx {

using Rng = std::mt19937_64;

/// Derives an independent sub-seed from a master seed and a stream index
/// (splitmix64 finalizer over the pair).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// lgamma without touching the global signgam.
double log_gamma(double x);

double poisson_log_pmf(int y, double mean);

/// Draws an index with probability proportional to exp(log_weights[i]).
std::size_t sample_log_categorical(std::span<const double> log_weights, Rng& rng);

/// Normalizes log-weights into probabilities (log-sum-exp).
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// Dirichlet draw computed in log space so that tiny concentrations do not
/// underflow to exact zeros; any remaining zeros are lifted to `floor` and the
/// row renormalized.
std::vector<double> sample_dirichlet(std::span<const double> concentration, Rng& rng,
                                     double floor = 1e-12);

double dirichlet_log_pdf(std::span<const double> x, std::span<const double> concentration);

double sample_gamma(double shape, double rate, Rng& rng);

double uniform01(Rng& rng);

}  // namespace latentdx
