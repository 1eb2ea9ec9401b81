#include "latentdx/rate_model.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "latentdx/csv.hpp"
#include "latentdx/error.hpp"

namespace latentdx {

namespace {

constexpr double kAgeOffset = 0.5;
// Log-rate used for codes that were never observed; exp(-60) is far below
// the expected-count floor for any realistic exposure.
constexpr double kEmptyLogRate = -60.0;

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double poisson_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) > 0.0) d += y(i) * std::log(y(i) / mu(i)) - (y(i) - mu(i));
    else d += mu(i);
  }
  return std::max(0.0, 2.0 * d);
}

PoissonGlmResult fit_poisson_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& offset, const GlmOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  PoissonGlmResult result;

  auto solve = [&](const Eigen::VectorXd& mu, const Eigen::VectorXd& eta) {
    Eigen::VectorXd z = (eta - offset).array() + (y - mu).array() / mu.array();
    Eigen::MatrixXd A = X.transpose() * mu.asDiagonal() * X;
    A.diagonal().array() += options.ridge;
    Eigen::VectorXd b = X.transpose() * (mu.asDiagonal() * z);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("rate model design matrix is rank deficient");
    Eigen::VectorXd beta = ldlt.solve(b);
    if (!beta.allFinite()) throw NumericalError("rate model normal equations produced non-finite values");
    return beta;
  };
  auto means = [&](const Eigen::VectorXd& beta) -> Eigen::VectorXd {
    return (X * beta + offset).array().exp().max(std::numeric_limits<double>::min());
  };

  Eigen::VectorXd mu = (y.array() + 0.1).matrix();
  Eigen::VectorXd eta = mu.array().log().matrix();
  Eigen::VectorXd beta = solve(mu, eta);
  mu = means(beta);
  double deviance = poisson_deviance(y, mu);
  result.deviance_trace.push_back(deviance);

  for (int it = 1; it <= options.max_iterations; ++it) {
    result.iterations = it;
    eta = X * beta + offset;
    Eigen::VectorXd candidate = solve(mu, eta);
    Eigen::VectorXd mu_c = means(candidate);
    double dev_c = poisson_deviance(y, mu_c);
    for (int half = 0; half < 40 && !(dev_c <= deviance); ++half) {
      candidate = 0.5 * (candidate + beta);
      mu_c = means(candidate);
      dev_c = poisson_deviance(y, mu_c);
    }
    if (!(dev_c <= deviance)) {
      // No descent direction left at floating-point resolution.
      result.converged = true;
      break;
    }
    const double change = std::abs(dev_c - deviance) / (std::abs(dev_c) + 0.1);
    beta = candidate;
    mu = mu_c;
    deviance = dev_c;
    result.deviance_trace.push_back(deviance);
    if (change < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  (void)n;
  (void)p;
  result.coefficients = beta;
  result.deviance = deviance;
  return result;
}

RateModelFit::RateModelFit(std::vector<SexRateModel> models) : models_(std::move(models)) {}

const SexRateModel* RateModelFit::model(Sex sex) const {
  for (const auto& m : models_)
    if (m.sex == sex) return &m;
  return nullptr;
}

double RateModelFit::log_rate(std::size_t disease, Sex sex, double age) const {
  const SexRateModel* m = model(sex);
  if (!m) throw DataError("rate model has no fit for sex " + std::string(sex_name(sex)));
  const DiseaseRate& r = m->diseases.at(disease);
  double eta = r.coefficients(0);
  if (m->basis) {
    const auto b = m->basis->evaluate(age);
    for (std::size_t j = 0; j < b.size(); ++j) eta += r.coefficients(static_cast<Eigen::Index>(j) + 1) * b[j];
  }
  return eta;
}

std::string RateModelFit::provenance() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& m : models_) {
    const int s = static_cast<int>(m.sex);
    h = fnv1a(h, &s, sizeof(s));
    if (m.basis) {
      for (double k : m.basis->interior_knots()) h = fnv1a(h, &k, sizeof(k));
    }
    for (const auto& d : m.diseases)
      h = fnv1a(h, d.coefficients.data(), sizeof(double) * static_cast<std::size_t>(d.coefficients.size()));
  }
  return "rate-fit:" + hex64(h);
}

RateModelFit fit_rate_model(const ExposureBins& bins, int df, const GlmOptions& options) {
  if (df < 1) throw ConfigError("spline df must be at least 1");
  std::vector<SexRateModel> models;
  for (Sex sex : {Sex::male, Sex::female}) {
    std::vector<const ExposureBin*> rows;
    for (const auto& b : bins.bins)
      if (b.sex == sex && b.person_years > 0.0) rows.push_back(&b);
    if (rows.empty()) continue;

    SexRateModel model;
    model.sex = sex;
    const auto n = static_cast<Eigen::Index>(rows.size());
    std::vector<double> ages(rows.size()), weights(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ages[i] = rows[i]->age + kAgeOffset;
      weights[i] = rows[i]->person_years;
    }
    // Bins are unique per (sex, age), so row count is the distinct-age count.
    if (static_cast<int>(rows.size()) >= df + 1) model.basis = SplineBasis::from_quantiles(ages, weights, df);

    const Eigen::Index p = model.basis ? model.basis->df() + 1 : 1;
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd offset(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      if (model.basis) {
        const auto b = model.basis->evaluate(ages[static_cast<std::size_t>(i)]);
        for (std::size_t j = 0; j < b.size(); ++j) X(i, static_cast<Eigen::Index>(j) + 1) = b[j];
      }
      offset(i) = std::log(rows[static_cast<std::size_t>(i)]->person_years);
    }

    model.diseases.resize(bins.vocabulary_size);
    Eigen::VectorXd y(n);
    for (std::size_t v = 0; v < bins.vocabulary_size; ++v) {
      for (Eigen::Index i = 0; i < n; ++i) y(i) = rows[static_cast<std::size_t>(i)]->events[v];
      DiseaseRate& rate = model.diseases[v];
      if (y.sum() <= 0.0) {
        rate.coefficients = Eigen::VectorXd::Zero(p);
        rate.coefficients(0) = kEmptyLogRate;
        rate.deviance = 0.0;
        rate.converged = true;
        continue;
      }
      auto glm = fit_poisson_glm(X, y, offset, options);
      rate.coefficients = std::move(glm.coefficients);
      rate.deviance = glm.deviance;
      rate.converged = glm.converged;
    }
    models.push_back(std::move(model));
  }
  if (models.empty()) throw DataError("no exposure to fit a rate model");
  return RateModelFit(std::move(models));
}

void write_rate_fit_csv(const RateModelFit& fit, const DiseaseVocabulary& vocabulary,
                        const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("code", "sex", "coef_index", "value", "deviance", "converged");
  for (const auto& m : fit.models())
    for (std::size_t v = 0; v < m.diseases.size(); ++v) {
      const auto& d = m.diseases[v];
      for (Eigen::Index j = 0; j < d.coefficients.size(); ++j)
        out.row(vocabulary.code(v), std::string(1, sex_code(m.sex)), static_cast<long long>(j),
                d.coefficients(j), d.deviance, d.converged ? 1 : 0);
    }
}

RateTable RateTable::load(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary) {
  CsvReader reader(path);
  const auto c_code = reader.require_column("code");
  const auto c_sex = reader.require_column("sex");
  const auto c_age = reader.require_column("age");
  const auto c_rate = reader.require_column("rate_per_person_year");
  RateTable table;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    auto v = vocabulary.index_of(f[c_code]);
    if (!v) throw DataError(reader.where("unknown disease code '" + f[c_code] + "'"));
    Sex sex;
    if (f[c_sex] == "M") sex = Sex::male;
    else if (f[c_sex] == "F") sex = Sex::female;
    else throw DataError(reader.where("sex must be M or F"));
    const int age = static_cast<int>(parse_integer(f[c_age], reader));
    const double rate = parse_double(f[c_rate], reader);
    if (!(rate >= 0.0)) throw DataError(reader.where("rate must be non-negative"));
    table.rates_[{*v, static_cast<int>(sex)}][age] = rate;
    for (const auto& s : f) h = fnv1a(h, s.data(), s.size());
  }
  table.provenance_ = "rate-table:" + hex64(h);
  return table;
}

double RateTable::rate(std::size_t disease, Sex sex, int age) const {
  auto it = rates_.find({disease, static_cast<int>(sex)});
  if (it == rates_.end() || it->second.empty())
    throw DataError("rate table has no entry for code index " + std::to_string(disease) + " sex " +
                    std::string(1, sex_code(sex)));
  const auto& by_age = it->second;
  auto hi = by_age.lower_bound(age);
  if (hi == by_age.end()) return std::prev(hi)->second;
  if (hi->first == age || hi == by_age.begin()) return hi->second;
  auto lo = std::prev(hi);
  return (age - lo->first) <= (hi->first - age) ? lo->second : hi->second;
}

namespace {

template <typename RateFn>
Eigen::MatrixXd expected_from_rates(const Cohort& cohort, RateFn&& rate) {
  const std::size_t V = cohort.vocabulary_size();
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cohort.size()),
                                            static_cast<Eigen::Index>(V));
  for (std::size_t m = 0; m < cohort.size(); ++m) {
    const auto& p = cohort.patient(m);
    for (const auto& seg : split_followup(p.age_at_entry, p.followup_years))
      for (std::size_t v = 0; v < V; ++v) e(m, v) += rate(v, p.sex, seg.age) * seg.person_years;
  }
  return e.cwiseMax(kExpectedFloor);
}

}  // namespace

ExpectedCounts predict_expected(const RateModelFit& fit, const Cohort& cohort,
                                std::vector<std::string>* warnings) {
  for (const auto& p : cohort.patients())
    if (!fit.covers(p.sex))
      throw DataError("rate model has no fit for sex " + std::string(sex_name(p.sex)) +
                      " (patient '" + p.id + "')");
  if (warnings) {
    for (const auto& m : fit.models()) {
      if (!m.basis) continue;
      std::size_t clamped = 0;
      for (const auto& p : cohort.patients()) {
        if (p.sex != m.sex) continue;
        for (const auto& seg : split_followup(p.age_at_entry, p.followup_years))
          if (!m.basis->inside(seg.age + kAgeOffset)) ++clamped;
      }
      if (clamped > 0)
        warnings->push_back(std::to_string(clamped) + " " + std::string(sex_name(m.sex)) +
                            " age bins outside the spline support were clamped to the boundary");
    }
  }
  ExpectedCounts out;
  out.values = expected_from_rates(cohort, [&](std::size_t v, Sex sex, int age) {
    return std::exp(fit.log_rate(v, sex, age + kAgeOffset));
  });
  out.provenance = fit.provenance();
  return out;
}

ExpectedCounts predict_expected(const RateTable& table, const Cohort& cohort) {
  ExpectedCounts out;
  out.values = expected_from_rates(
      cohort, [&](std::size_t v, Sex sex, int age) { return table.rate(v, sex, age); });
  out.provenance = table.provenance();
  return out;
}

void write_expected_csv(const ExpectedCounts& expected, const Cohort& cohort,
                        const std::filesystem::path& path) {
  CsvWriter out(path);
  out.row("patient_id", "code", "expected");
  for (std::size_t m = 0; m < cohort.size(); ++m)
    for (std::size_t v = 0; v < cohort.vocabulary_size(); ++v)
      out.row(cohort.patient(m).id, cohort.vocabulary().code(v), expected.values(m, v));
}

ExpectedCounts load_expected_csv(const std::filesystem::path& path, const Cohort& cohort) {
  CsvReader reader(path);
  const auto c_id = reader.require_column("patient_id");
  const auto c_code = reader.require_column("code");
  const auto c_e = reader.require_column("expected");
  std::unordered_map<std::string, std::size_t> rows;
  for (std::size_t m = 0; m < cohort.size(); ++m) rows.emplace(cohort.patient(m).id, m);
  ExpectedCounts out;
  out.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(cohort.size()),
                                         static_cast<Eigen::Index>(cohort.vocabulary_size()),
                                         std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> f;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) throw DataError(reader.where("wrong number of fields"));
    auto m = rows.find(f[c_id]);
    if (m == rows.end()) throw DataError(reader.where("patient '" + f[c_id] + "' is not in the cohort"));
    auto v = cohort.vocabulary().index_of(f[c_code]);
    if (!v) throw DataError(reader.where("unknown disease code '" + f[c_code] + "'"));
    const double e = parse_double(f[c_e], reader);
    if (!(e >= 0.0)) throw DataError(reader.where("expected count must be non-negative"));
    out.values(m->second, *v) = std::max(e, kExpectedFloor);
    for (const auto& s : f) h = fnv1a(h, s.data(), s.size());
  }
  if (!out.values.allFinite())
    throw DataError(path.string() + ": expected counts do not cover every patient and code");
  out.provenance = "expected-file:" + hex64(h);
  return out;
}

}  // namespace latentdx
