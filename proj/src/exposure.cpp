#include "latentdx/exposure.hpp"

#include <cmath>
#include <map>

#include "latentdx/error.hpp"

namespace latentdx {

std::vector<AgeSegment> split_followup(double age_at_entry, double followup_years) {
  std::vector<AgeSegment> segments;
  const double end = age_at_entry + followup_years;
  double current = age_at_entry;
  while (current < end) {
    const double floor_age = std::floor(current);
    const double next = std::min(floor_age + 1.0, end);
    const double py = next - current;
    if (py > 0.0) segments.push_back({static_cast<int>(floor_age), py});
    current = next;
  }
  return segments;
}

double ExposureBins::total_person_years() const {
  double total = 0.0;
  for (const auto& b : bins) total += b.person_years;
  return total;
}

ExposureBins bin_exposure(const Cohort& cohort) {
  if (cohort.size() == 0) throw DataError("cannot bin exposure of an empty cohort");
  const std::size_t V = cohort.vocabulary_size();
  std::map<std::pair<int, int>, ExposureBin> table;
  const auto& y = cohort.counts();
  for (std::size_t m = 0; m < cohort.size(); ++m) {
    const auto& p = cohort.patient(m);
    const auto segments = split_followup(p.age_at_entry, p.followup_years);
    double total_py = 0.0;
    for (const auto& s : segments) total_py += s.person_years;
    for (const auto& s : segments) {
      auto key = std::make_pair(p.sex == Sex::male ? 0 : 1, s.age);
      auto [it, inserted] = table.try_emplace(key);
      ExposureBin& bin = it->second;
      if (inserted) {
        bin.sex = p.sex;
        bin.age = s.age;
        bin.events.assign(V, 0.0);
      }
      bin.person_years += s.person_years;
      const double share = s.person_years / total_py;
      for (std::size_t v = 0; v < V; ++v)
        if (y(m, v) > 0) bin.events[v] += share * y(m, v);
    }
  }
  ExposureBins out;
  out.vocabulary_size = V;
  out.bins.reserve(table.size());
  for (auto& [key, bin] : table) out.bins.push_back(std::move(bin));
  return out;
}

}  // namespace latentdx
