#include "latentdx/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"
#include "latentdx/exposure.hpp"
#include "latentdx/random.hpp"

namespace latentdx {

namespace {

enum Stream : std::uint64_t {
  kRateCurves = 1,
  kPhi = 2,
  kDemographics = 3,
  kPatients = 4,
  kSurvival = 5,
};

constexpr double kReferenceAge = 75.0;

}  // namespace

void GeneratorConfig::validate() const {
  if (patients < 1 || vocabulary_size < 1 || clusters < 1)
    throw ConfigError("generator needs at least one patient, code and cluster");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigError("alpha and beta must be positive");
  if (!(xi > 0.0) || !(delta > 0.0)) throw ConfigError("xi and delta must be positive");
  if (std::abs(xi * delta - 1.0) > 1e-12)
    throw ConfigError("xi * delta must equal 1 (mean-one patient multiplier)");
  if (!(female_fraction >= 0.0 && female_fraction <= 1.0))
    throw ConfigError("female_fraction must lie in [0, 1]");
  if (!(min_age < max_age)) throw ConfigError("min_age must be below max_age");
  if (!(followup_min > 0.0) || followup_max < followup_min)
    throw ConfigError("follow-up range must be positive and ordered");
  if (!(target_mean_diagnoses > 0.0)) throw ConfigError("target mean diagnoses must be positive");
  if (!(age_sd > 0.0)) throw ConfigError("age_sd must be positive");
  if (!(base_hazard > 0.0)) throw ConfigError("base_hazard must be positive");
  if (block_topics && vocabulary_size < clusters)
    throw ConfigError("block topics need at least one code per cluster");
}

GeneratorConfig preset_config(std::string_view name) {
  GeneratorConfig c;
  c.vocabulary_size = 285;
  c.clusters = 20;
  c.alpha = 0.1;
  c.beta = 0.1;
  if (name == "osteoporosis") {
    c.patients = 388;
    c.female_fraction = 0.946;
    c.median_age_male = 74.7;
    c.median_age_female = 68.8;
    c.target_mean_diagnoses = 406.0;
    c.index_code = "206";
  } else if (name == "dementia") {
    c.patients = 304;
    c.female_fraction = 0.688;
    c.median_age_male = 85.0;
    c.median_age_female = 81.6;
    c.target_mean_diagnoses = 387.5;
    c.index_code = "653";
  } else if (name == "copd") {
    c.patients = 685;
    c.female_fraction = 0.508;
    c.median_age_male = 75.1;
    c.median_age_female = 71.1;
    c.target_mean_diagnoses = 402.0;
    c.index_code = "127";
  } else {
    throw ConfigError("unknown preset '" + std::string(name) +
                      "' (expected osteoporosis, dementia or copd)");
  }
  c.index_target_mean = 40.0;
  return c;
}

std::vector<std::string> preset_names() { return {"osteoporosis", "dementia", "copd"}; }

DiseaseVocabulary ccs_like_vocabulary(std::size_t size) {
  std::vector<std::string> codes;
  codes.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t code = i < 259 ? i + 1 : 650 + (i - 259);
    codes.push_back(std::to_string(code));
  }
  return DiseaseVocabulary(std::move(codes));
}

std::pair<Cohort, GroundTruth> generate_synthetic_cohort(const GeneratorConfig& config) {
  config.validate();
  const std::size_t M = config.patients;
  const std::size_t V = config.vocabulary_size;
  const std::size_t K = config.clusters;

  DiseaseVocabulary vocabulary = ccs_like_vocabulary(V);
  std::optional<std::size_t> index_disease;
  if (!config.index_code.empty()) {
    index_disease = vocabulary.index_of(config.index_code);
    if (!index_disease)
      throw ConfigError("index code '" + config.index_code + "' is outside the generated vocabulary");
  }

  // Baseline rate curves.
  std::vector<double> intercept(V), slope(V), sex_effect(V);
  {
    Rng rng(derive_seed(config.seed, kRateCurves));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t n = 0; n < V; ++n) {
      intercept[n] = config.rate_intercept_sd * normal(rng);
      const double sign = config.age_slope_split ? (n % 2 == 0 ? 1.0 : -1.0) : 1.0;
      slope[n] = sign * config.age_slope + config.age_slope_sd * normal(rng);
      sex_effect[n] = config.sex_effect_sd * normal(rng);
    }
  }

  GroundTruth truth;
  truth.phi.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(V));
  {
    Rng rng(derive_seed(config.seed, kPhi));
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<double> conc(V, config.beta);
      std::size_t lo = 0, hi = V;
      if (config.block_topics) {
        lo = k * V / K;
        hi = (k + 1) * V / K;
        std::vector<double> block(hi - lo, config.beta);
        auto draw = sample_dirichlet(block, rng);
        for (std::size_t n = 0; n < V; ++n)
          truth.phi(k, n) = (n >= lo && n < hi) ? draw[n - lo] : 0.0;
      } else {
        auto draw = sample_dirichlet(conc, rng);
        for (std::size_t n = 0; n < V; ++n) truth.phi(k, n) = draw[n];
      }
    }
  }

  std::vector<PatientRecord> patients(M);
  {
    Rng rng(derive_seed(config.seed, kDemographics));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double width = std::max(static_cast<double>(M), 10.0);
    const int digits = static_cast<int>(std::ceil(std::log10(width + 1.0)));
    for (std::size_t m = 0; m < M; ++m) {
      PatientRecord& p = patients[m];
      char id[32];
      std::snprintf(id, sizeof(id), "P%0*zu", digits, m + 1);
      p.id = id;
      p.sex = uniform01(rng) < config.female_fraction ? Sex::female : Sex::male;
      const double median = p.sex == Sex::male ? config.median_age_male : config.median_age_female;
      double age = 0.0;
      do {
        age = median + config.age_sd * normal(rng);
      } while (age < config.min_age || age >= config.max_age - 0.5);
      p.age_at_entry = age;
      double fu = config.followup_min + (config.followup_max - config.followup_min) * uniform01(rng);
      p.followup_years = std::min(fu, config.max_age - age);
    }
  }

  // Expected counts from the baseline curves, scaled to the target mean.
  truth.expected.setZero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(V));
  for (std::size_t m = 0; m < M; ++m) {
    const auto& p = patients[m];
    const double female = p.sex == Sex::female ? 1.0 : 0.0;
    for (const auto& seg : split_followup(p.age_at_entry, p.followup_years)) {
      const double age = seg.age + 0.5 - kReferenceAge;
      for (std::size_t n = 0; n < V; ++n)
        truth.expected(m, n) +=
            std::exp(intercept[n] + slope[n] * age + sex_effect[n] * female) * seg.person_years;
    }
  }
  const double raw_total = truth.expected.sum();
  if (!(raw_total > 0.0) || !std::isfinite(raw_total))
    throw ConfigError("target mean diagnoses unattainable: all baseline rates are zero");
  truth.expected *= config.target_mean_diagnoses * static_cast<double>(V) * static_cast<double>(M) /
                    raw_total;
  if (index_disease) {
    // Rescale the index column so that phi-weighted counts average the target.
    const double mean_col = truth.expected.col(*index_disease).mean() / static_cast<double>(V);
    if (mean_col > 0.0 && config.index_target_mean > 0.0)
      truth.expected.col(*index_disease) *= config.index_target_mean / mean_col;
  }

  truth.theta.setZero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(K));
  truth.gamma.resize(static_cast<Eigen::Index>(M));
  truth.z.assign(M, {});
  truth.dominant.assign(M, 0);
  CountMatrix counts = CountMatrix::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(V));
  {
    Rng rng(derive_seed(config.seed, kPatients));
    const std::vector<double> alpha_vec(K, config.alpha);
    std::vector<double> phi_row(V);
    for (std::size_t m = 0; m < M; ++m) {
      bool drawn = false;
      for (int attempt = 0; attempt < 1000 && !drawn; ++attempt) {
        std::vector<double> theta(K, 0.0);
        if (config.pure_patients) {
          theta[std::uniform_int_distribution<std::size_t>(0, K - 1)(rng)] = 1.0;
        } else {
          theta = sample_dirichlet(alpha_vec, rng, 0.0);
        }
        const double gamma = sample_gamma(config.xi, 1.0 / config.delta, rng);
        std::discrete_distribution<int> pick_cluster(theta.begin(), theta.end());
        std::vector<TrueAssignment> z;
        counts.row(m).setZero();
        if (config.lda_mode) {
          const double mean_tokens = gamma * truth.expected.row(m).sum() / static_cast<double>(V);
          const int tokens = std::poisson_distribution<int>(mean_tokens)(rng);
          std::vector<std::vector<int>> labels(V, std::vector<int>(K, 0));
          for (int t = 0; t < tokens; ++t) {
            const int k = pick_cluster(rng);
            for (std::size_t n = 0; n < V; ++n) phi_row[n] = truth.phi(k, n);
            std::discrete_distribution<std::size_t> pick_code(phi_row.begin(), phi_row.end());
            const std::size_t n = pick_code(rng);
            counts(m, n) += 1;
            labels[n][k] += 1;
          }
          for (std::size_t n = 0; n < V; ++n)
            if (counts(m, n) > 0)
              z.push_back({n, static_cast<int>(std::max_element(labels[n].begin(), labels[n].end()) -
                                               labels[n].begin())});
        } else {
          for (std::size_t n = 0; n < V; ++n) {
            const int k = pick_cluster(rng);
            const double mean = truth.phi(k, n) * truth.expected(m, n) * gamma;
            const int y = mean > 0.0 ? std::poisson_distribution<int>(mean)(rng) : 0;
            if (y > 0) {
              counts(m, n) = y;
              z.push_back({n, k});
            }
          }
        }
        if (counts.row(m).sum() > 0) {
          for (std::size_t k = 0; k < K; ++k) truth.theta(m, k) = theta[k];
          truth.gamma(m) = gamma;
          truth.z[m] = std::move(z);
          truth.dominant[m] =
              static_cast<int>(std::max_element(theta.begin(), theta.end()) - theta.begin());
          drawn = true;
        }
      }
      if (!drawn) throw ConfigError("generator could not produce a patient with any diagnosis");
    }
  }

  {
    Rng rng(derive_seed(config.seed, kSurvival));
    for (std::size_t m = 0; m < M; ++m) {
      PatientRecord& p = patients[m];
      const double position =
          K > 1 ? static_cast<double>(truth.dominant[m]) / static_cast<double>(K - 1) - 0.5 : 0.0;
      const double hazard =
          config.base_hazard * std::exp(config.hazard_spread * position +
                                        config.survival_age_effect * (p.age_at_entry - kReferenceAge));
      const double t = std::exponential_distribution<double>(hazard)(rng);
      p.event = t <= p.followup_years;
      p.survival_time = p.event ? t : p.followup_years;
    }
  }

  Cohort cohort(std::move(vocabulary), std::move(patients), std::move(counts));
  return {std::move(cohort), std::move(truth)};
}

void write_ground_truth(const GroundTruth& truth, const Cohort& cohort,
                        const std::filesystem::path& directory) {
  const auto K = truth.theta.cols();
  {
    CsvWriter out(directory / "truth_theta.csv");
    out.row("patient_id", "topic", "weight");
    for (std::size_t m = 0; m < cohort.size(); ++m)
      for (Eigen::Index k = 0; k < K; ++k)
        out.row(cohort.patient(m).id, static_cast<long long>(k), truth.theta(m, k));
  }
  {
    CsvWriter out(directory / "truth_phi.csv");
    out.row("topic", "code", "weight");
    for (Eigen::Index k = 0; k < K; ++k)
      for (std::size_t n = 0; n < cohort.vocabulary_size(); ++n)
        out.row(static_cast<long long>(k), cohort.vocabulary().code(n), truth.phi(k, n));
  }
  {
    CsvWriter out(directory / "truth_gamma.csv");
    out.row("patient_id", "gamma");
    for (std::size_t m = 0; m < cohort.size(); ++m) out.row(cohort.patient(m).id, truth.gamma(m));
  }
  {
    CsvWriter out(directory / "truth_z.csv");
    out.row("patient_id", "code", "topic");
    for (std::size_t m = 0; m < cohort.size(); ++m)
      for (const auto& a : truth.z[m])
        out.row(cohort.patient(m).id, cohort.vocabulary().code(a.disease), a.cluster);
  }
}

}  // namespace latentdx
