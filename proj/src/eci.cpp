#include "latentdx/eci.hpp"

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"

namespace latentdx {

const std::array<std::string_view, kEciCategories>& eci_category_names() {
  static const std::array<std::string_view, kEciCategories> names = {
      "congestive_heart_failure",
      "cardiac_arrhythmias",
      "valvular_disease",
      "pulmonary_circulation_disorders",
      "peripheral_vascular_disease",
      "hypertension",
      "paralysis",
      "other_neurological_disorders",
      "chronic_pulmonary_disease",
      "diabetes_uncomplicated",
      "diabetes_complicated",
      "hypothyroidism",
      "renal_failure",
      "liver_disease",
      "peptic_ulcer_disease",
      "lymphoma",
      "metastatic_cancer",
      "solid_tumour_without_metastasis",
      "rheumatoid_arthritis",
      "coagulopathy",
      "obesity",
      "weight_loss",
      "fluid_electrolyte_disorders",
      "blood_loss_anaemia",
      "deficiency_anaemia",
      "alcohol_abuse",
      "drug_abuse",
      "psychoses",
      "depression",
  };
  return names;
}

std::optional<std::size_t> eci_category_index(std::string_view name) {
  const auto& names = eci_category_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

std::string_view band_label(EciBand band) {
  switch (band) {
    case EciBand::zero_to_one: return "0-1";
    case EciBand::two_to_four: return "2-4";
    case EciBand::five_plus: return "5+";
  }
  return "?";
}

EciBand band_for_score(int score) {
  if (score <= 1) return EciBand::zero_to_one;
  if (score <= 4) return EciBand::two_to_four;
  return EciBand::five_plus;
}

EciMapping load_eci_mapping(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary) {
  CsvReader reader(path);
  const auto c_code = reader.require_column("code");
  const auto c_cat = reader.require_column("category");
  EciMapping mapping;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    const auto cat = eci_category_index(f[c_cat]);
    if (!cat) throw DataError(reader.where("unknown ECI category '" + f[c_cat] + "'"));
    const auto code = vocabulary.index_of(f[c_code]);
    if (!code) {
      ++mapping.skipped_codes;
      continue;
    }
    mapping.entries.emplace_back(*code, *cat);
  }
  return mapping;
}

void write_eci_mapping(const EciMapping& mapping, const DiseaseVocabulary& vocabulary,
                       const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("code", "category");
  for (const auto& [code, cat] : mapping.entries) out.row(vocabulary.code(code), eci_category_names()[cat]);
}

EciMapping default_eci_mapping(const DiseaseVocabulary& vocabulary) {
  EciMapping mapping;
  const std::size_t stride = std::max<std::size_t>(1, vocabulary.size() / kEciCategories);
  for (std::size_t c = 0; c < kEciCategories && c * stride < vocabulary.size(); ++c)
    mapping.entries.emplace_back(c * stride, c);
  return mapping;
}

EciProfile eci_profile(std::span<const int> counts, const EciMapping& mapping) {
  EciProfile p;
  for (const auto& [code, cat] : mapping.entries) {
    if (code >= counts.size()) throw DataError("ECI mapping refers to a code outside the count row");
    if (counts[code] > 0) p.flags[cat] = true;
  }
  for (bool f : p.flags) p.score += f ? 1 : 0;
  p.band = band_for_score(p.score);
  return p;
}

std::vector<EciProfile> eci_profiles(const Cohort& cohort, const EciMapping& mapping) {
  std::vector<EciProfile> out;
  out.reserve(cohort.size());
  const auto& y = cohort.counts();
  for (std::size_t m = 0; m < cohort.size(); ++m)
    out.push_back(eci_profile(std::span<const int>(y.row(static_cast<Eigen::Index>(m)).data(),
                                                   static_cast<std::size_t>(y.cols())),
                              mapping));
  return out;
}

void write_eci_profiles_csv(const std::vector<EciProfile>& profiles, const Cohort& cohort,
                            const std::filesystem::path& path) {
  CsvWriter out(path);
  out << "patient_id" << "score" << "band";
  for (auto name : eci_category_names()) out << name;
  out.end_row();
  for (std::size_t m = 0; m < profiles.size(); ++m) {
    out << cohort.patient(m).id << profiles[m].score << band_label(profiles[m].band);
    for (bool f : profiles[m].flags) out << (f ? 1 : 0);
    out.end_row();
  }
}

}  // namespace latentdx
