#include "latentdx/survival.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "latentdx/error.hpp"

namespace latentdx {

double KmCurve::at(double t) const {
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

namespace {

std::vector<SurvivalSample> sorted_samples(std::span<const SurvivalSample> samples) {
  std::vector<SurvivalSample> s(samples.begin(), samples.end());
  for (const auto& x : s)
    if (!std::isfinite(x.time) || x.time < 0.0) throw DataError("survival times must be finite and non-negative");
  // Events before censorings at equal times.
  std::stable_sort(s.begin(), s.end(), [](const SurvivalSample& a, const SurvivalSample& b) {
    if (a.time != b.time) return a.time < b.time;
    return a.event && !b.event;
  });
  return s;
}

}  // namespace

KmCurve kaplan_meier(std::span<const SurvivalSample> samples) {
  if (samples.empty()) throw DataError("no survival samples");
  const auto s = sorted_samples(samples);
  KmCurve curve;
  double at_risk = static_cast<double>(s.size());
  double surv = 1.0;
  std::size_t i = 0;
  while (i < s.size()) {
    const double t = s[i].time;
    double events = 0.0, leaving = 0.0;
    for (; i < s.size() && s[i].time == t; ++i) {
      leaving += 1.0;
      if (s[i].event) events += 1.0;
    }
    if (events > 0.0) {
      surv *= 1.0 - events / at_risk;
      curve.times.push_back(t);
      curve.survival.push_back(surv);
      curve.at_risk.push_back(at_risk);
      curve.events.push_back(events);
    }
    at_risk -= leaving;
  }
  return curve;
}

LogRankResult log_rank_test(std::span<const SurvivalSample> samples, std::size_t groups) {
  if (groups < 2) throw ConfigError("the log-rank test needs at least two groups");
  const auto s = sorted_samples(samples);
  const auto G = static_cast<Eigen::Index>(groups);
  Eigen::VectorXd at_risk = Eigen::VectorXd::Zero(G);
  for (const auto& x : s) {
    if (x.group < 0 || x.group >= G) throw DataError("survival group label out of range");
    at_risk(x.group) += 1.0;
  }
  for (Eigen::Index g = 0; g < G; ++g)
    if (at_risk(g) == 0.0) throw DataError("survival group " + std::to_string(g) + " is empty");

  Eigen::VectorXd observed = Eigen::VectorXd::Zero(G), expected = Eigen::VectorXd::Zero(G);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(G, G);
  double total_events = 0.0;
  std::size_t i = 0;
  Eigen::VectorXd d(G), leaving(G);
  while (i < s.size()) {
    const double t = s[i].time;
    d.setZero();
    leaving.setZero();
    for (; i < s.size() && s[i].time == t; ++i) {
      leaving(s[i].group) += 1.0;
      if (s[i].event) d(s[i].group) += 1.0;
    }
    const double dt = d.sum();
    const double nt = at_risk.sum();
    if (dt > 0.0) {
      total_events += dt;
      observed += d;
      expected += at_risk * (dt / nt);
      if (nt > 1.0) {
        const double f = dt * (nt - dt) / (nt - 1.0);
        for (Eigen::Index a = 0; a < G; ++a)
          for (Eigen::Index b = 0; b < G; ++b)
            cov(a, b) += f * at_risk(a) / nt * ((a == b ? 1.0 : 0.0) - at_risk(b) / nt);
      }
    }
    at_risk -= leaving;
  }
  if (total_events == 0.0) throw DataError("no events observed");

  const Eigen::VectorXd diff = (observed - expected).head(G - 1);
  const Eigen::MatrixXd v = cov.topLeftCorner(G - 1, G - 1);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(v);
  cod.setThreshold(1e-12);
  const double chi = std::max(0.0, diff.dot(cod.pseudoInverse() * diff));
  LogRankResult r;
  r.chi_square = chi;
  r.degrees_of_freedom = static_cast<int>(G - 1);
  r.p_value = chi_square_sf(chi, r.degrees_of_freedom);
  r.observed.assign(observed.data(), observed.data() + G);
  r.expected.assign(expected.data(), expected.data() + G);
  return r;
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0)) throw ConfigError("chi-square degrees of freedom must be positive");
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

double chi_square_cdf(double x, double df) {
  if (!(df > 0.0)) throw ConfigError("chi-square degrees of freedom must be positive");
  if (!(x > 0.0)) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(df / 2.0, x / 2.0);
}

}  // namespace latentdx
