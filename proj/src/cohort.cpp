#include "latentdx/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <limits>
#include <set>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"

namespace latentdx {

DiseaseVocabulary::DiseaseVocabulary(std::vector<std::string> codes) : codes_(std::move(codes)) {
  if (codes_.empty()) throw DataError("disease vocabulary is empty");
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i].empty()) throw DataError("disease vocabulary contains an empty code");
    if (!index_.emplace(codes_[i], i).second)
      throw DataError("duplicate code '" + codes_[i] + "' in disease vocabulary");
  }
}

std::optional<std::size_t> DiseaseVocabulary::index_of(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

DiseaseVocabulary DiseaseVocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> codes;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t");
    codes.push_back(line.substr(first, last - first + 1));
  }
  return DiseaseVocabulary(std::move(codes));
}

void DiseaseVocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& c : codes_) out << c << '\n';
}

char sex_code(Sex sex) { return sex == Sex::male ? 'M' : 'F'; }

std::string_view sex_name(Sex sex) { return sex == Sex::male ? "male" : "female"; }

void check_record(const PatientRecord& r) {
  auto fail = [&](const std::string& what) {
    throw DataError("patient '" + r.id + "': " + what);
  };
  if (r.id.empty()) throw DataError("patient record with empty id");
  if (!std::isfinite(r.age_at_entry)) fail("age_at_entry is not finite");
  if (!(r.followup_years > 0.0) || !std::isfinite(r.followup_years))
    fail("followup_years must be positive");
  if (!(r.survival_time >= 0.0) || !std::isfinite(r.survival_time))
    fail("survival_time must be non-negative");
  if (r.survival_time > r.followup_years + 1e-9) fail("survival_time exceeds followup_years");
}

Cohort::Cohort(DiseaseVocabulary vocabulary, std::vector<PatientRecord> patients, CountMatrix counts)
    : vocabulary_(std::move(vocabulary)), patients_(std::move(patients)), counts_(std::move(counts)) {
  if (static_cast<std::size_t>(counts_.rows()) != patients_.size() ||
      static_cast<std::size_t>(counts_.cols()) != vocabulary_.size())
    throw DataError("count matrix is " + std::to_string(counts_.rows()) + "x" +
                    std::to_string(counts_.cols()) + " but cohort has " +
                    std::to_string(patients_.size()) + " patients and " +
                    std::to_string(vocabulary_.size()) + " codes");
  std::set<std::string> seen;
  for (std::size_t m = 0; m < patients_.size(); ++m) {
    check_record(patients_[m]);
    if (!seen.insert(patients_[m].id).second)
      throw DataError("duplicate patient id '" + patients_[m].id + "'");
    if ((counts_.row(m).array() < 0).any())
      throw DataError("patient '" + patients_[m].id + "' has a negative count");
    if (counts_.row(m).sum() <= 0)
      throw DataError("patient '" + patients_[m].id + "' has zero diagnoses");
  }
}

long long Cohort::total_diagnoses(std::size_t m) const {
  long long total = 0;
  for (Eigen::Index v = 0; v < counts_.cols(); ++v) total += counts_(m, v);
  return total;
}

std::size_t Cohort::distinct_codes(std::size_t m) const {
  return static_cast<std::size_t>((counts_.row(m).array() > 0).count());
}

namespace {

Sex parse_sex(std::string_view s, const CsvReader& reader) {
  if (s == "M" || s == "m") return Sex::male;
  if (s == "F" || s == "f") return Sex::female;
  throw DataError(reader.where("sex must be M or F, got '" + std::string(s) + "'"));
}

}  // namespace

Cohort load_cohort(const std::filesystem::path& diagnoses_path,
                   const std::filesystem::path& demographics_path,
                   const DiseaseVocabulary& vocabulary) {
  std::map<std::string, PatientRecord> records;
  {
    CsvReader reader(demographics_path);
    const std::size_t c_id = reader.require_column("patient_id");
    const std::size_t c_sex = reader.require_column("sex");
    const std::size_t c_age = reader.require_column("age_at_entry");
    const std::size_t c_fu = reader.require_column("followup_years");
    const std::size_t c_st = reader.require_column("survival_time");
    const std::size_t c_ev = reader.require_column("event");
    const std::size_t width = reader.header().size();
    std::vector<std::string> f;
    while (reader.next(f)) {
      if (f.size() != width)
        throw DataError(reader.where("expected " + std::to_string(width) + " fields, got " +
                                     std::to_string(f.size())));
      PatientRecord r;
      r.id = f[c_id];
      if (r.id.empty()) throw DataError(reader.where("empty patient_id"));
      r.sex = parse_sex(f[c_sex], reader);
      r.age_at_entry = parse_double(f[c_age], reader);
      r.followup_years = parse_double(f[c_fu], reader);
      r.survival_time = parse_double(f[c_st], reader);
      const long long ev = parse_integer(f[c_ev], reader);
      if (ev != 0 && ev != 1) throw DataError(reader.where("event must be 0 or 1"));
      r.event = ev == 1;
      try {
        check_record(r);
      } catch (const DataError& e) {
        throw DataError(reader.where(e.what()));
      }
      if (records.count(r.id))
        throw DataError(reader.where("duplicate patient id '" + r.id + "' in demographics"));
      records.emplace(r.id, std::move(r));
    }
  }

  std::map<std::string, std::map<std::size_t, long long>> tallies;
  {
    CsvReader reader(diagnoses_path);
    const std::size_t c_id = reader.require_column("patient_id");
    const std::size_t c_code = reader.require_column("code");
    const auto c_count = reader.column("count");
    std::vector<std::string> f;
    std::size_t rows = 0;
    while (reader.next(f)) {
      if (f.size() != reader.header().size())
        throw DataError(reader.where("expected " + std::to_string(reader.header().size()) +
                                     " fields, got " + std::to_string(f.size())));
      const std::string& id = f[c_id];
      if (id.empty()) throw DataError(reader.where("empty patient_id"));
      auto index = vocabulary.index_of(f[c_code]);
      if (!index) throw DataError(reader.where("unknown disease code '" + f[c_code] + "'"));
      long long count = 1;
      if (c_count && !f[*c_count].empty()) count = parse_integer(f[*c_count], reader);
      if (count < 0) throw DataError(reader.where("negative count"));
      if (!records.count(id))
        throw DataError(reader.where("patient '" + id + "' is missing from demographics"));
      tallies[id][*index] += count;
      ++rows;
    }
    if (rows == 0) throw DataError(diagnoses_path.string() + ": no diagnoses");
  }

  std::vector<PatientRecord> patients;
  CountMatrix counts = CountMatrix::Zero(static_cast<Eigen::Index>(records.size()),
                                         static_cast<Eigen::Index>(vocabulary.size()));
  for (auto& [id, record] : records) {
    const auto m = static_cast<Eigen::Index>(patients.size());
    auto it = tallies.find(id);
    long long total = 0;
    if (it != tallies.end()) {
      for (auto [v, c] : it->second) {
        if (c > std::numeric_limits<int>::max())
          throw DataError("count overflow for patient '" + id + "'");
        counts(m, static_cast<Eigen::Index>(v)) = static_cast<int>(c);
        total += c;
      }
    }
    if (total == 0) throw DataError("patient '" + id + "' has zero diagnoses");
    patients.push_back(std::move(record));
  }
  return Cohort(vocabulary, std::move(patients), std::move(counts));
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& diagnoses_path,
                  const std::filesystem::path& demographics_path) {
  {
    CsvWriter out(diagnoses_path);
    out.row("patient_id", "code", "count");
    const auto& y = cohort.counts();
    for (std::size_t m = 0; m < cohort.size(); ++m)
      for (std::size_t v = 0; v < cohort.vocabulary_size(); ++v)
        if (y(m, v) > 0) out.row(cohort.patient(m).id, cohort.vocabulary().code(v), y(m, v));
  }
  CsvWriter out(demographics_path);
  out.row("patient_id", "sex", "age_at_entry", "followup_years", "survival_time", "event");
  for (const auto& p : cohort.patients()) {
    out.row(p.id, std::string(1, sex_code(p.sex)), p.age_at_entry, p.followup_years,
            p.survival_time, p.event ? 1 : 0);
  }
}

std::size_t ValidationReport::passed() const {
  return static_cast<std::size_t>(
      std::count_if(patients.begin(), patients.end(), [](const auto& p) { return p.pass; }));
}

std::vector<std::string> ValidationReport::failing_ids() const {
  std::vector<std::string> ids;
  for (const auto& p : patients)
    if (!p.pass) ids.push_back(p.patient_id);
  return ids;
}

ValidationReport validate_cohort(const Cohort& cohort, long long min_total, long long max_total,
                                 std::string_view index_code, long long min_index) {
  const auto index = cohort.vocabulary().index_of(index_code);
  if (!index)
    throw ConfigError("index code '" + std::string(index_code) + "' is not in the vocabulary");
  ValidationReport report;
  report.patients.reserve(cohort.size());
  for (std::size_t m = 0; m < cohort.size(); ++m) {
    PatientValidation p;
    p.patient_id = cohort.patient(m).id;
    p.total = cohort.total_diagnoses(m);
    p.index_count = cohort.counts()(m, *index);
    if (p.total < min_total) p.reasons.emplace_back("total below minimum");
    if (p.total > max_total) p.reasons.emplace_back("total above maximum");
    if (p.index_count < min_index) p.reasons.emplace_back("index count below minimum");
    p.pass = p.reasons.empty();
    report.patients.push_back(std::move(p));
  }
  return report;
}

void write_validation_csv(const ValidationReport& report, const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("patient_id", "total", "index_count", "pass", "reasons");
  for (const auto& p : report.patients) {
    std::string reasons;
    for (const auto& r : p.reasons) reasons += (reasons.empty() ? "" : "; ") + r;
    out.row(p.patient_id, p.total, p.index_count, p.pass ? 1 : 0, reasons);
  }
}

}  // namespace latentdx
