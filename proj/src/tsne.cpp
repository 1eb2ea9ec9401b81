#include "latentdx/tsne.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "latentdx/error.hpp"
#include "latentdx/random.hpp"

namespace latentdx {

void EmbedConfig::validate(std::size_t points) const {
  if (points < 4) throw ConfigError("t-SNE needs at least 4 points");
  if (!(perplexity > 1.0)) throw ConfigError("perplexity must exceed 1");
  if (!(perplexity < (static_cast<double>(points) - 1.0) / 3.0))
    throw ConfigError("perplexity must be below (points - 1) / 3 = " +
                      std::to_string((static_cast<double>(points) - 1.0) / 3.0));
  if (iterations < 250) throw ConfigError("t-SNE needs at least 250 iterations");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

namespace {

// Fills p for bandwidth exp(log_sigma); returns the perplexity 2^H.
double conditional(std::span<const double> d2, double d2_min, double log_sigma, std::vector<double>& p) {
  const double scale = 0.5 * std::exp(-2.0 * log_sigma);
  double total = 0.0;
  for (std::size_t j = 0; j < d2.size(); ++j) {
    p[j] = std::exp(-(d2[j] - d2_min) * scale);
    total += p[j];
  }
  double h = 0.0;
  for (double& v : p) {
    v /= total;
    if (v > 0.0) h -= v * std::log2(v);
  }
  return std::exp2(h);
}

}  // namespace

Calibration perplexity_calibration(std::span<const double> distances, double perplexity) {
  Calibration c;
  const std::size_t n = distances.size();
  c.p.assign(n, 0.0);
  if (n == 0) throw ConfigError("perplexity calibration needs at least one neighbour");
  std::vector<double> d2(n);
  double d2_min = std::numeric_limits<double>::infinity(), d_min_pos = std::numeric_limits<double>::infinity(),
         d_max = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    d2[j] = distances[j] * distances[j];
    d2_min = std::min(d2_min, d2[j]);
    if (distances[j] > 0.0) d_min_pos = std::min(d_min_pos, distances[j]);
    d_max = std::max(d_max, distances[j]);
  }
  if (d_max == 0.0) {
    std::cerr << "warning: duplicate points, using uniform affinities\n";
    std::fill(c.p.begin(), c.p.end(), 1.0 / static_cast<double>(n));
    c.perplexity = static_cast<double>(n);
    c.sigma = 1.0;
    c.degenerate = true;
    return c;
  }
  double lo = std::log(d_min_pos) - 20.0, hi = std::log(d_max) + 20.0;
  double mid = 0.5 * (lo + hi);
  c.perplexity = conditional(d2, d2_min, mid, c.p);
  for (int step = 0; step < 50 && std::abs(c.perplexity - perplexity) > 1e-5; ++step) {
    if (c.perplexity > perplexity)
      hi = mid;
    else
      lo = mid;
    mid = 0.5 * (lo + hi);
    c.perplexity = conditional(d2, d2_min, mid, c.p);
  }
  c.sigma = std::exp(mid);
  return c;
}

Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& rows, double perplexity) {
  const auto n = rows.rows();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> d(static_cast<std::size_t>(n - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d[k++] = (rows.row(i) - rows.row(j)).norm();
    const auto c = perplexity_calibration(d, perplexity);
    k = 0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) p(i, j) = c.p[k++];
  }
  Eigen::MatrixXd joint = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return joint;
}

namespace {

Eigen::MatrixXd student_numerators(const Eigen::MatrixXd& y, double& total) {
  const auto n = y.rows();
  Eigen::MatrixXd num = Eigen::MatrixXd::Zero(n, n);
  total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = num(j, i) = v;
      total += 2.0 * v;
    }
  return num;
}

}  // namespace

double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  double total = 0.0;
  const auto num = student_numerators(y, total);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / (num(i, j) / total));
  return kl;
}

Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y, double exaggeration) {
  double total = 0.0;
  const auto num = student_numerators(y, total);
  const auto n = y.rows();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, y.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = (exaggeration * p(i, j) - num(i, j) / total) * num(i, j);
      grad.row(i) += 4.0 * w * (y.row(i) - y.row(j));
    }
  return grad;
}

double Embedding2D::kl_at(std::size_t iteration) const {
  for (const auto& [it, kl] : kl_trace)
    if (it == iteration) return kl;
  throw ConfigError("no KL value recorded at iteration " + std::to_string(iteration));
}

Embedding2D tsne(const Eigen::MatrixXd& rows, const EmbedConfig& config) {
  const auto n = rows.rows();
  config.validate(static_cast<std::size_t>(n));
  if (!rows.allFinite()) throw DataError("t-SNE input has non-finite entries");
  Rng rng(config.seed);
  std::normal_distribution<double> jitter(0.0, 1e-10), init(0.0, 1e-4);

  Eigen::MatrixXd x = rows;
  std::map<std::vector<double>, Eigen::Index> seen;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> key(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index k = 0; k < rows.cols(); ++k) key[static_cast<std::size_t>(k)] = rows(i, k);
    if (!seen.emplace(std::move(key), i).second)
      for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) += jitter(rng);
  }
  const Eigen::MatrixXd p = joint_probabilities(x, config.perplexity);

  Embedding2D out;
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = init(rng);
    y(i, 1) = init(rng);
  }
  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2), gains = Eigen::MatrixXd::Ones(n, 2);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const double exaggeration = it < config.exaggeration_iterations ? config.early_exaggeration : 1.0;
    const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
    const Eigen::MatrixXd grad = tsne_gradient(p, y, exaggeration);
    if (!grad.allFinite()) throw NumericalError("t-SNE gradient became non-finite at iteration " + std::to_string(it));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < 2; ++k) {
        const bool same = (grad(i, k) > 0.0) == (update(i, k) > 0.0);
        gains(i, k) = same ? std::max(0.01, gains(i, k) * 0.8) : gains(i, k) + 0.2;
        update(i, k) = momentum * update(i, k) - config.learning_rate * gains(i, k) * grad(i, k);
      }
    y += update;
    y.rowwise() -= y.colwise().mean();
    if ((it + 1) % 50 == 0) out.kl_trace.emplace_back(it + 1, tsne_kl(p, y));
  }
  out.coordinates = y;
  out.kl = tsne_kl(p, y);
  return out;
}

double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  const auto n = points.rows();
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, double> sum;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[labels[static_cast<std::size_t>(j)]] += (points.row(i) - points.row(j)).norm();
    const int own = labels[static_cast<std::size_t>(i)];
    const auto own_size = sizes[own];
    if (own_size < 2) continue;
    const double a = sum[own] / static_cast<double>(own_size - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sizes)
      if (l != own) b = std::min(b, sum[l] / static_cast<double>(s));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

}  // namespace latentdx
