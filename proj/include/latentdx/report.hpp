#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "latentdx/cohort.hpp"
#include "latentdx/eci.hpp"

namespace latentdx {

struct GroupSummary {
  int label = 0;
  std::size_t size = 0;
  std::size_t male = 0;
  std::size_t female = 0;
  double median_age = 0.0;        // midpoint convention
  double median_diagnoses = 0.0;  // midpoint convention
  double median_eci = 0.0;        // lower median
  std::array<std::size_t, 3> bands{};
  std::array<std::size_t, kEciCategories> categories{};
};

/// Demographic and comorbidity comparison of subgroups. p-values are absent
/// when fewer than two non-empty subgroups remain.
struct SubgroupReport {
  std::size_t patients = 0;
  std::vector<GroupSummary> groups;
  std::optional<double> sex_p;
  std::optional<double> age_p;
  std::optional<double> diagnoses_p;
  std::optional<double> eci_p;
  std::optional<double> band_p;
  std::array<std::optional<double>, kEciCategories> category_p{};
  std::vector<std::string> warnings;
};

SubgroupReport subgroup_report(const Cohort& cohort, const std::vector<int>& labels, std::size_t groups,
                               const std::vector<EciProfile>& profiles);

/// One row per measure; columns are the subgroups then the p-value.
void write_report_csv(const SubgroupReport& report, const std::filesystem::path& path);
/// Aligned text table; counts carry their within-subgroup percentage.
std::string format_report_text(const SubgroupReport& report, const std::string& title);

}  // namespace latentdx
