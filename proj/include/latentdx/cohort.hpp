#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace latentdx {

/// Ordered set of disease category codes. The position of a code is the column
/// index used by every patient-by-disease matrix built over this vocabulary.
class DiseaseVocabulary {
 public:
  explicit DiseaseVocabulary(std::vector<std::string> codes);

  std::size_t size() const { return codes_.size(); }
  const std::string& code(std::size_t index) const { return codes_.at(index); }
  const std::vector<std::string>& codes() const { return codes_; }
  std::optional<std::size_t> index_of(std::string_view code) const;
  bool contains(std::string_view code) const { return index_of(code).has_value(); }

  /// One code per line, order-significant.
  static DiseaseVocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const DiseaseVocabulary& other) const { return codes_ == other.codes_; }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Sex { male, female };

char sex_code(Sex sex);
std::string_view sex_name(Sex sex);

struct PatientRecord {
  std::string id;
  Sex sex = Sex::female;
  double age_at_entry = 0.0;
  double followup_years = 0.0;
  double survival_time = 0.0;
  bool event = false;

  bool operator==(const PatientRecord&) const = default;
};

/// Throws DataError when a record breaks its invariants.
void check_record(const PatientRecord& record);

using CountMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Patients, their demographics and their diagnosis counts y(m, n).
/// Immutable once constructed.
class Cohort {
 public:
  Cohort(DiseaseVocabulary vocabulary, std::vector<PatientRecord> patients, CountMatrix counts);

  const DiseaseVocabulary& vocabulary() const { return vocabulary_; }
  const std::vector<PatientRecord>& patients() const { return patients_; }
  const PatientRecord& patient(std::size_t m) const { return patients_.at(m); }
  const CountMatrix& counts() const { return counts_; }
  std::size_t size() const { return patients_.size(); }
  std::size_t vocabulary_size() const { return vocabulary_.size(); }

  long long total_diagnoses(std::size_t m) const;
  /// Number of distinct codes with a positive count for patient m.
  std::size_t distinct_codes(std::size_t m) const;

 private:
  DiseaseVocabulary vocabulary_;
  std::vector<PatientRecord> patients_;
  CountMatrix counts_;
};

/// Reads the diagnoses and demographics CSVs. Patients are ordered by id.
Cohort load_cohort(const std::filesystem::path& diagnoses_path,
                   const std::filesystem::path& demographics_path,
                   const DiseaseVocabulary& vocabulary);

/// Writes both CSVs; diagnoses use the aggregated `patient_id,code,count` form.
void write_cohort(const Cohort& cohort, const std::filesystem::path& diagnoses_path,
                  const std::filesystem::path& demographics_path);

struct PatientValidation {
  std::string patient_id;
  long long total = 0;
  long long index_count = 0;
  bool pass = true;
  std::vector<std::string> reasons;
};

struct ValidationReport {
  std::vector<PatientValidation> patients;
  std::size_t passed() const;
  std::vector<std::string> failing_ids() const;
};

ValidationReport validate_cohort(const Cohort& cohort, long long min_total, long long max_total,
                                 std::string_view index_code, long long min_index);

void write_validation_csv(const ValidationReport& report, const std::filesystem::path& path);

}  // namespace latentdx
