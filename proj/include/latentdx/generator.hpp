#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latentdx/cohort.hpp"

namespace latentdx {

/// Settings for forward simulation of a cohort from the topic generative
/// processes. Defaults give a small generic cohort; presets() mirrors the
/// published cohort margins.
struct GeneratorConfig {
  std::size_t patients = 200;
  std::size_t vocabulary_size = 50;
  std::size_t clusters = 5;

  double alpha = 0.1;  // Dirichlet concentration of each theta row
  double beta = 0.1;   // Dirichlet concentration of each phi row
  double xi = 2.0;     // Gamma shape of the patient multiplier
  double delta = 0.5;  // Gamma scale; xi * delta must be 1

  double female_fraction = 0.5;
  double median_age_male = 75.0;
  double median_age_female = 75.0;
  double age_sd = 8.0;
  double min_age = 50.0;
  double max_age = 100.0;
  double followup_min = 5.0;
  double followup_max = 17.0;

  /// Mean total diagnoses per patient implied by the baseline rates.
  double target_mean_diagnoses = 400.0;

  // Baseline log-rate per disease: intercept + slope * (age - 75) + sex effect.
  double rate_intercept_sd = 0.5;
  double age_slope = 0.0;
  double age_slope_sd = 0.02;
  /// Alternate the sign of `age_slope` across codes (even codes rise with age,
  /// odd codes fall), producing strongly age-confounded raw counts.
  bool age_slope_split = false;
  double sex_effect_sd = 0.2;

  // Exponential survival; log-hazard depends on the dominant true cluster.
  double base_hazard = 0.06;
  double hazard_spread = 1.5;
  double survival_age_effect = 0.04;

  /// Draw diagnosis tokens through the multinomial (LDA) process instead of
  /// Poisson counts.
  bool lda_mode = false;
  /// Topic k puts its mass only on the k-th contiguous block of codes.
  bool block_topics = false;
  /// Each patient belongs to exactly one cluster (one-hot theta).
  bool pure_patients = false;

  /// Optional index code; if set, its baseline rate is raised so that the
  /// expected index count is about `index_target_mean`.
  std::string index_code;
  double index_target_mean = 0.0;

  std::uint64_t seed = 42;

  void validate() const;
};

/// Named preset ("osteoporosis", "dementia", "copd"). Unknown names throw.
GeneratorConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

struct TrueAssignment {
  std::size_t disease = 0;
  int cluster = 0;
};

struct GroundTruth {
  Eigen::MatrixXd theta;  // M x K
  Eigen::MatrixXd phi;    // K x V
  Eigen::VectorXd gamma;  // M
  /// Cluster label for each (patient, diagnosed code).
  std::vector<std::vector<TrueAssignment>> z;
  /// Expected counts e(m, n) implied by the baseline curves.
  Eigen::MatrixXd expected;
  /// argmax of each theta row.
  std::vector<int> dominant;
};

/// Codes shaped like CCS single-level categories: 1..259, then 650 onwards.
DiseaseVocabulary ccs_like_vocabulary(std::size_t size);

std::pair<Cohort, GroundTruth> generate_synthetic_cohort(const GeneratorConfig& config);

void write_ground_truth(const GroundTruth& truth, const Cohort& cohort,
                        const std::filesystem::path& directory);

}  // namespace latentdx
