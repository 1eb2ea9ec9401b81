#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

#include "latentdx/cohort.hpp"

namespace latentdx {

enum class ModelKind { lda, pdm };

std::string_view model_name(ModelKind kind);
ModelKind parse_model(std::string_view name);

struct SamplerConfig {
  std::size_t chains = 2;
  std::size_t burn_in = 500;
  std::size_t samples = 1000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Posterior point estimates of a topic model, averaged over retained sweeps
/// and over label-aligned chains.
struct TopicFit {
  ModelKind model = ModelKind::lda;
  Eigen::MatrixXd theta;  // M x K, rows on the simplex
  Eigen::MatrixXd phi;    // K x V, rows on the simplex
  Eigen::VectorXd gamma;  // M, PDM only
  /// Log-likelihood per chain per sweep (burn-in included).
  std::vector<std::vector<double>> log_likelihood;
  /// Post-burn-in MH acceptance rate, chains x K (PDM only).
  Eigen::MatrixXd acceptance;
  /// Proposal concentration frozen at the end of burn-in, chains x K (PDM only).
  Eigen::MatrixXd proposal_concentration;

  std::size_t topics() const { return static_cast<std::size_t>(phi.rows()); }
};

/// Estimates accumulated by one chain.
struct ChainEstimate {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd phi;
  Eigen::VectorXd gamma;
  std::vector<double> log_likelihood;
  Eigen::VectorXd acceptance;
  Eigen::VectorXd proposal_concentration;
};

double cosine_similarity(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                         const Eigen::Ref<const Eigen::RowVectorXd>& b);

/// Greedy matching by cosine similarity of rows: result[k] is the candidate
/// row paired with reference row k. Highest-similarity pairs are fixed first.
std::vector<std::size_t> match_topics(const Eigen::MatrixXd& reference,
                                      const Eigen::MatrixXd& candidate);

/// Aligns every chain to the first one and averages.
TopicFit combine_chains(ModelKind kind, std::vector<ChainEstimate> chains);

/// Runs `count` independent jobs, using up to thread_limit() threads.
void run_parallel(std::size_t count, const std::function<void(std::size_t)>& job);
void set_thread_limit(std::size_t threads);
std::size_t thread_limit();

void write_theta_csv(const TopicFit& fit, const Cohort& cohort, const std::filesystem::path& path);
void write_phi_csv(const TopicFit& fit, const DiseaseVocabulary& vocabulary,
                   const std::filesystem::path& path);
void write_diagnostics_csv(const TopicFit& fit, const std::filesystem::path& path);
void write_gamma_csv(const TopicFit& fit, const Cohort& cohort, const std::filesystem::path& path);
void write_acceptance_csv(const TopicFit& fit, const std::filesystem::path& path);
/// `patient_id,topic,weight` for any M x K matrix.
void write_patient_topic_csv(const Eigen::MatrixXd& weights, const Cohort& cohort,
                             const std::filesystem::path& path);

Eigen::MatrixXd read_patient_topic_csv(const std::filesystem::path& path, const Cohort& cohort);
Eigen::MatrixXd read_phi_csv(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary);
Eigen::VectorXd read_gamma_csv(const std::filesystem::path& path, const Cohort& cohort);

/// Reloads theta/phi (and gamma when present) written by the writers above.
TopicFit read_topic_fit(const std::filesystem::path& directory, const Cohort& cohort);

}  // namespace latentdx
