#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "latentdx/cohort.hpp"

namespace latentdx {

enum class ClusterAlgorithm { hierarchical, kmeans, birch };

std::string_view algorithm_name(ClusterAlgorithm algorithm);
ClusterAlgorithm parse_algorithm(std::string_view name);
const std::vector<ClusterAlgorithm>& all_algorithms();

struct SubgroupAssignment {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  std::size_t groups = 0;
  std::vector<int> labels;
  /// Within-cluster sum of squares of the final partition.
  double objective = 0.0;
  /// k-means only: objective after every centroid update.
  std::vector<double> trace;

  std::vector<std::size_t> sizes() const;
};

/// Sum of squared distances of rows to their group means.
double within_cluster_ss(const Eigen::MatrixXd& x, const std::vector<int>& labels, std::size_t groups);

/// k-means++ seeding, Lloyd iterations, then single-point (Hartigan) moves
/// until no reassignment lowers the objective.
SubgroupAssignment kmeans(const Eigen::MatrixXd& x, std::size_t groups, std::uint64_t seed,
                          std::size_t max_iter = 300, double tol = 1e-6);

struct WardMerge {
  std::size_t left = 0;   // cluster slots; slot i < n is the i-th input row
  std::size_t right = 0;
  double height = 0.0;  // twice the increase in within-cluster sum of squares
  std::size_t size = 0;
};

/// Agglomerative Ward merges via the Lance-Williams recurrence. Optional
/// weights treat row i as weights[i] coincident points. The merged cluster
/// takes slot n + merge index.
std::vector<WardMerge> ward_dendrogram(const Eigen::MatrixXd& x, const std::vector<double>& weights = {});

/// Labels after undoing the last groups-1 merges; labels are numbered by
/// first appearance.
std::vector<int> cut_dendrogram(const std::vector<WardMerge>& merges, std::size_t points, std::size_t groups);

SubgroupAssignment hierarchical_ward(const Eigen::MatrixXd& x, std::size_t groups);

/// Clustering feature: count, linear sum and sum of squared norms.
struct ClusteringFeature {
  double n = 0.0;
  Eigen::VectorXd linear;
  double squared = 0.0;

  static ClusteringFeature of_point(const Eigen::Ref<const Eigen::VectorXd>& x);
  void merge(const ClusteringFeature& other);
  Eigen::VectorXd centroid() const { return linear / n; }
  double radius() const;
};

/// Leaf entries of a CF tree built in a single pass over the rows.
std::vector<ClusteringFeature> build_cf_tree(const Eigen::MatrixXd& x, std::size_t branching_factor,
                                             double threshold);

/// 0.25 times the mean pairwise distance over up to 200 sampled rows.
double default_birch_threshold(const Eigen::MatrixXd& x, std::uint64_t seed);

SubgroupAssignment birch(const Eigen::MatrixXd& x, std::size_t groups, std::size_t branching_factor,
                         double threshold);

struct SweepCell {
  ClusterAlgorithm algorithm = ClusterAlgorithm::kmeans;
  std::size_t groups = 0;
  std::optional<SubgroupAssignment> assignment;
  std::string error;
};

struct SweepOptions {
  std::vector<ClusterAlgorithm> algorithms = {ClusterAlgorithm::hierarchical, ClusterAlgorithm::kmeans,
                                              ClusterAlgorithm::birch};
  std::size_t min_groups = 2;
  std::size_t max_groups = 6;
  std::uint64_t seed = 1;
  std::size_t branching_factor = 50;
  /// Non-positive selects default_birch_threshold.
  double birch_threshold = 0.0;
};

/// Every (algorithm, G) cell; failures are recorded per cell.
std::vector<SweepCell> sweep_subgroups(const Eigen::MatrixXd& x, const SweepOptions& options);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

void write_assignments_csv(const std::vector<SweepCell>& cells, const Cohort& cohort,
                           const std::filesystem::path& path);

/// Reads `patient_id,algorithm,G,label`; rows for other cells are skipped.
SubgroupAssignment read_assignment(const std::filesystem::path& path, const Cohort& cohort,
                                   ClusterAlgorithm algorithm, std::size_t groups);

}  // namespace latentdx
