#pragma once

#include <vector>

#include "latentdx/cohort.hpp"

namespace latentdx {

/// Person-time spent by one patient inside a single integer age year.
struct AgeSegment {
  int age = 0;
  double person_years = 0.0;
};

/// Splits [age_at_entry, age_at_entry + followup_years) at integer ages.
std::vector<AgeSegment> split_followup(double age_at_entry, double followup_years);

struct ExposureBin {
  Sex sex = Sex::female;
  int age = 0;
  double person_years = 0.0;
  /// Diagnosis counts attributed to this bin, one entry per vocabulary code.
  /// Real-valued: a patient's counts are spread over its bins in proportion
  /// to person-years.
  std::vector<double> events;
};

/// Person-years and events aggregated by (sex, single year of age), sorted by
/// sex then age. Each (sex, age) pair appears at most once.
struct ExposureBins {
  std::size_t vocabulary_size = 0;
  std::vector<ExposureBin> bins;

  double total_person_years() const;
};

ExposureBins bin_exposure(const Cohort& cohort);

}  // namespace latentdx
