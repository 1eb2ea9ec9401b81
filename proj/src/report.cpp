#include "latentdx/report.hpp"

#include <algorithm>
#include <sstream>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"
#include "latentdx/rank_tests.hpp"

namespace latentdx {

SubgroupReport subgroup_report(const Cohort& cohort, const std::vector<int>& labels, std::size_t groups,
                               const std::vector<EciProfile>& profiles) {
  if (labels.size() != cohort.size() || profiles.size() != cohort.size())
    throw DataError("subgroup labels and ECI profiles must cover every patient");
  SubgroupReport report;
  report.patients = cohort.size();
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t m = 0; m < labels.size(); ++m) {
    if (labels[m] < 0 || static_cast<std::size_t>(labels[m]) >= groups)
      throw DataError("subgroup label out of range for patient '" + cohort.patient(m).id + "'");
    members[static_cast<std::size_t>(labels[m])].push_back(m);
  }
  std::vector<std::vector<double>> ages, diagnoses, scores;
  for (std::size_t g = 0; g < groups; ++g) {
    if (members[g].empty()) {
      report.warnings.push_back("subgroup " + std::to_string(g + 1) + " is empty and was left out");
      continue;
    }
    GroupSummary s;
    s.label = static_cast<int>(g);
    s.size = members[g].size();
    std::vector<double> a, d, e;
    for (auto m : members[g]) {
      const auto& p = cohort.patient(m);
      (p.sex == Sex::male ? s.male : s.female) += 1;
      a.push_back(p.age_at_entry);
      d.push_back(static_cast<double>(cohort.total_diagnoses(m)));
      e.push_back(profiles[m].score);
      s.bands[static_cast<std::size_t>(profiles[m].band)] += 1;
      for (std::size_t c = 0; c < kEciCategories; ++c) s.categories[c] += profiles[m].flags[c] ? 1 : 0;
    }
    s.median_age = median_midpoint(a);
    s.median_diagnoses = median_midpoint(d);
    s.median_eci = median_lower(e);
    ages.push_back(std::move(a));
    diagnoses.push_back(std::move(d));
    scores.push_back(std::move(e));
    report.groups.push_back(s);
  }
  const auto G = static_cast<Eigen::Index>(report.groups.size());
  if (G < 2) return report;

  report.age_p = kruskal_wallis(ages, 0).p_value;
  report.diagnoses_p = kruskal_wallis(diagnoses, 0).p_value;
  report.eci_p = kruskal_wallis(scores, 0).p_value;
  Eigen::MatrixXd sex(2, G), bands(3, G), cat(2, G);
  for (Eigen::Index g = 0; g < G; ++g) {
    const auto& s = report.groups[static_cast<std::size_t>(g)];
    sex(0, g) = static_cast<double>(s.male);
    sex(1, g) = static_cast<double>(s.female);
    for (Eigen::Index b = 0; b < 3; ++b) bands(b, g) = static_cast<double>(s.bands[static_cast<std::size_t>(b)]);
  }
  report.sex_p = chi_square_independence(sex).p_value;
  report.band_p = chi_square_independence(bands).p_value;
  for (std::size_t c = 0; c < kEciCategories; ++c) {
    for (Eigen::Index g = 0; g < G; ++g) {
      const auto& s = report.groups[static_cast<std::size_t>(g)];
      cat(0, g) = static_cast<double>(s.categories[c]);
      cat(1, g) = static_cast<double>(s.size - s.categories[c]);
    }
    report.category_p[c] = chi_square_independence(cat).p_value;
  }
  return report;
}

namespace {

struct Row {
  std::string measure;
  std::vector<double> values;
  bool count = false;  // values are patient counts
  std::optional<double> p;
};

std::vector<Row> report_rows(const SubgroupReport& r) {
  std::vector<Row> rows;
  auto add = [&](std::string name, bool count, std::optional<double> p, auto get) {
    Row row{std::move(name), {}, count, p};
    for (const auto& g : r.groups) row.values.push_back(get(g));
    rows.push_back(std::move(row));
  };
  add("patients", true, std::nullopt, [](const GroupSummary& g) { return double(g.size); });
  add("male", true, r.sex_p, [](const GroupSummary& g) { return double(g.male); });
  add("female", true, std::nullopt, [](const GroupSummary& g) { return double(g.female); });
  add("median_age", false, r.age_p, [](const GroupSummary& g) { return g.median_age; });
  add("median_diagnoses", false, r.diagnoses_p, [](const GroupSummary& g) { return g.median_diagnoses; });
  add("median_eci", false, r.eci_p, [](const GroupSummary& g) { return g.median_eci; });
  for (std::size_t b = 0; b < 3; ++b)
    add("eci_band_" + std::string(band_label(static_cast<EciBand>(b))), true, b == 0 ? r.band_p : std::nullopt,
        [b](const GroupSummary& g) { return double(g.bands[b]); });
  for (std::size_t c = 0; c < kEciCategories; ++c)
    add(std::string(eci_category_names()[c]), true, r.category_p[c],
        [c](const GroupSummary& g) { return double(g.categories[c]); });
  return rows;
}

}  // namespace

void write_report_csv(const SubgroupReport& report, const std::filesystem::path& path) {
  CsvWriter out(path);
  out << "measure";
  for (const auto& g : report.groups) out << "subgroup_" + std::to_string(g.label + 1);
  out << "p_value";
  out.end_row();
  for (const auto& row : report_rows(report)) {
    out << row.measure;
    for (double v : row.values) out << v;
    if (row.p)
      out << *row.p;
    else
      out << "";
    out.end_row();
  }
}

std::string format_report_text(const SubgroupReport& report, const std::string& title) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"measure"};
  for (const auto& g : report.groups) header.push_back("subgroup " + std::to_string(g.label + 1));
  header.push_back("p-value");
  cells.push_back(header);
  for (const auto& row : report_rows(report)) {
    std::vector<std::string> line{row.measure};
    for (std::size_t g = 0; g < row.values.size(); ++g) {
      if (row.count) {
        const double size = static_cast<double>(report.groups[g].size);
        const double base = row.measure == "patients" ? static_cast<double>(report.patients) : size;
        line.push_back(format_fixed(row.values[g], 0) + " (" + format_fixed(100.0 * row.values[g] / base, 1) + "%)");
      } else {
        line.push_back(format_fixed(row.values[g], 1));
      }
    }
    line.push_back(!row.p ? "" : *row.p < 0.001 ? "<0.001" : format_fixed(*row.p, 3));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream os;
  os << title << "\n";
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      os << line[i];
      if (i + 1 < line.size()) os << std::string(width[i] - line[i].size() + 2, ' ');
    }
    os << "\n";
  }
  for (const auto& w : report.warnings) os << "warning: " << w << "\n";
  return os.str();
}

}  // namespace latentdx
