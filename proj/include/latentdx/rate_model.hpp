#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentdx/cohort.hpp"
#include "latentdx/exposure.hpp"
#include "latentdx/spline.hpp"

namespace latentdx {

/// Floor applied to every expected count so Poisson log-likelihoods stay finite.
inline constexpr double kExpectedFloor = 1e-8;

struct GlmOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // relative deviance change
  double ridge = 1e-8;      // added to the diagonal of the normal equations
};

struct PoissonGlmResult {
  Eigen::VectorXd coefficients;
  double deviance = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Deviance after each accepted IRLS update.
  std::vector<double> deviance_trace;
};

/// Poisson regression with log link and a fixed offset by iteratively
/// reweighted least squares; deviance increases are undone by step halving.
/// Counts may be real-valued.
PoissonGlmResult fit_poisson_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& counts,
                                 const Eigen::VectorXd& offset, const GlmOptions& options = {});

double poisson_deviance(const Eigen::VectorXd& counts, const Eigen::VectorXd& means);

struct DiseaseRate {
  Eigen::VectorXd coefficients;  // intercept, then one per spline function
  double deviance = 0.0;
  bool converged = false;
};

struct SexRateModel {
  Sex sex = Sex::female;
  /// Absent when too few distinct ages were observed: intercept-only fits.
  std::optional<SplineBasis> basis;
  std::vector<DiseaseRate> diseases;
};

/// Per (disease, sex) log-rate curves over age.
class RateModelFit {
 public:
  explicit RateModelFit(std::vector<SexRateModel> models);

  const SexRateModel* model(Sex sex) const;
  const std::vector<SexRateModel>& models() const { return models_; }
  bool covers(Sex sex) const { return model(sex) != nullptr; }

  /// Log events per person-year at a given (continuous) age.
  double log_rate(std::size_t disease, Sex sex, double age) const;
  /// Short content digest identifying this fit.
  std::string provenance() const;

 private:
  std::vector<SexRateModel> models_;
};

/// Fits every (disease, sex) pair. Sexes with no exposure are skipped. Ages
/// enter the model at bin midpoints (age + 0.5).
RateModelFit fit_rate_model(const ExposureBins& bins, int df = 4, const GlmOptions& options = {});

void write_rate_fit_csv(const RateModelFit& fit, const DiseaseVocabulary& vocabulary,
                        const std::filesystem::path& path);

/// Externally supplied rates: `code,sex,age,rate_per_person_year`. Lookups at
/// an age not in the table use the nearest tabulated age.
class RateTable {
 public:
  static RateTable load(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary);
  double rate(std::size_t disease, Sex sex, int age) const;
  std::string provenance() const { return provenance_; }

 private:
  std::map<std::pair<std::size_t, int>, std::map<int, double>> rates_;
  std::string provenance_;
};

struct ExpectedCounts {
  Eigen::MatrixXd values;  // M x V, every entry >= kExpectedFloor
  std::string provenance;
};

ExpectedCounts predict_expected(const RateModelFit& fit, const Cohort& cohort,
                                std::vector<std::string>* warnings = nullptr);
ExpectedCounts predict_expected(const RateTable& table, const Cohort& cohort);

/// Long format `patient_id,code,expected`.
void write_expected_csv(const ExpectedCounts& expected, const Cohort& cohort,
                        const std::filesystem::path& path);
ExpectedCounts load_expected_csv(const std::filesystem::path& path, const Cohort& cohort);

}  // namespace latentdx
