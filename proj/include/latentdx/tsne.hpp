#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace latentdx {

struct EmbedConfig {
  double perplexity = 10.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  std::uint64_t seed = 1;

  void validate(std::size_t points) const;
};

struct Calibration {
  double sigma = 0.0;
  std::vector<double> p;
  double perplexity = 0.0;  // 2^H of the returned distribution
  bool degenerate = false;  // every distance was zero
};

/// Bandwidth search for one point given its distances to every other point.
Calibration perplexity_calibration(std::span<const double> distances, double perplexity);

/// Symmetrized joint affinities (p_j|i + p_i|j) / 2n, zero diagonal.
Eigen::MatrixXd joint_probabilities(const Eigen::MatrixXd& rows, double perplexity);

/// KL(P || Q) with Student-t Q over the 2-D points.
double tsne_kl(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y);
/// Gradient of KL with P scaled by `exaggeration`.
Eigen::MatrixXd tsne_gradient(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y, double exaggeration = 1.0);

struct Embedding2D {
  Eigen::MatrixXd coordinates;  // n x 2
  double kl = 0.0;
  /// (iteration, KL) every 50 iterations.
  std::vector<std::pair<std::size_t, double>> kl_trace;

  double kl_at(std::size_t iteration) const;
};

/// Exact t-SNE with momentum, gains and early exaggeration.
Embedding2D tsne(const Eigen::MatrixXd& rows, const EmbedConfig& config);

/// Mean silhouette coefficient of a labelling under Euclidean distance.
double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);

}  // namespace latentdx
