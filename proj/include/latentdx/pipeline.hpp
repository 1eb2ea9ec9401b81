#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentdx/cohort.hpp"
#include "latentdx/generator.hpp"

namespace latentdx {

/// Where a cohort lives on disk. `directory` supplies the conventional file
/// names; explicit paths override them.
struct CohortPaths {
  std::string directory;
  std::string diagnoses;
  std::string demographics;
  std::string vocabulary;

  std::filesystem::path diagnoses_path() const;
  std::filesystem::path demographics_path() const;
  std::filesystem::path vocabulary_path() const;
};

struct RunOptions {
  std::string out;
  bool force = false;
  std::size_t threads = 1;
};

struct GenerateOptions {
  RunOptions run;
  std::string preset;
  GeneratorConfig generator;
};

struct RatesOptions {
  RunOptions run;
  CohortPaths cohort;
  int df = 4;
  std::string rates_file;
};

struct ModelOptions {
  std::string model = "pdm";
  std::size_t k = 20;
  std::optional<double> alpha;  // default depends on the model
  std::optional<double> beta;
  double xi = 2.0;
  double delta = 0.5;
  double proposal_concentration = 500.0;
  std::size_t phi_steps = 5;
  bool diagnosed_only = false;
  std::size_t chains = 2;
  std::size_t burn_in = 500;
  std::size_t samples = 1000;
  std::size_t thin = 1;
};

struct FitOptions {
  RunOptions run;
  CohortPaths cohort;
  ModelOptions model;
  std::uint64_t seed = 0;
  std::string expected;    // expected.csv from `rates`
  std::string rates_file;  // or a rate table
};

struct PosteriorOptions {
  RunOptions run;
  CohortPaths cohort;
  std::string fit;  // directory written by `fit`
  std::string expected;
  std::string rates_file;
};

struct ClusterOptions {
  RunOptions run;
  CohortPaths cohort;
  std::string features;  // patient_id,topic,weight
  std::vector<std::string> algorithms = {"hierarchical", "kmeans", "birch"};
  std::size_t min_groups = 2;
  std::size_t max_groups = 6;
  std::uint64_t seed = 1;
  std::size_t branching_factor = 50;
  double birch_threshold = 0.0;
};

struct SurviveOptions {
  RunOptions run;
  CohortPaths cohort;
  std::string assignments;
  /// Empty: test every cell and plot the selected one.
  std::string algorithm;
  std::size_t groups = 0;
};

struct EciOptions {
  RunOptions run;
  CohortPaths cohort;
  std::string assignments;
  std::string algorithm;
  std::size_t groups = 0;
  std::string mapping;  // empty: default mapping
};

struct EmbedOptions {
  RunOptions run;
  CohortPaths cohort;
  std::string fit;
  std::optional<double> perplexity;  // 10 for PDM fits, 20 for LDA fits
  std::size_t iterations = 5000;
  double learning_rate = 200.0;
  std::uint64_t seed = 1;
};

struct PipelineOptions {
  RunOptions run;
  CohortPaths cohort;
  ModelOptions model;
  std::uint64_t seed = 1;
  int df = 4;
  std::string rates_file;
  std::string features = "posterior";  // or "theta"
  std::vector<std::string> algorithms = {"hierarchical", "kmeans", "birch"};
  std::size_t min_groups = 2;
  std::size_t max_groups = 6;
  std::size_t branching_factor = 50;
  double birch_threshold = 0.0;
  std::string eci_mapping;
  std::optional<double> perplexity;
  std::size_t tsne_iterations = 5000;
};

void run_generate(const GenerateOptions& options);
void run_rates(const RatesOptions& options);
void run_fit(const FitOptions& options);
void run_posterior(const PosteriorOptions& options);
void run_cluster(const ClusterOptions& options);
void run_survive(const SurviveOptions& options);
void run_eci(const EciOptions& options);
void run_embed(const EmbedOptions& options);
void run_pipeline(const PipelineOptions& options);

/// Re-executes the run recorded in a manifest into `out` (default: the
/// manifest's own directory) and returns outputs whose digests differ.
std::vector<std::string> run_replay(const std::filesystem::path& manifest_path, const std::string& out,
                                    bool force);

Cohort load_cohort(const CohortPaths& paths);

/// Options serialized into manifests.
nlohmann::json to_json(const GenerateOptions& o);
nlohmann::json to_json(const RatesOptions& o);
nlohmann::json to_json(const FitOptions& o);
nlohmann::json to_json(const PosteriorOptions& o);
nlohmann::json to_json(const ClusterOptions& o);
nlohmann::json to_json(const SurviveOptions& o);
nlohmann::json to_json(const EciOptions& o);
nlohmann::json to_json(const EmbedOptions& o);
nlohmann::json to_json(const PipelineOptions& o);

}  // namespace latentdx
