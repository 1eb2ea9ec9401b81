#pragma once

#include <span>
#include <vector>

namespace latentdx {

struct SurvivalSample {
  double time = 0.0;
  bool event = false;
  int group = 0;
};

/// Product-limit curve listed at the distinct event times.
struct KmCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<double> at_risk;
  std::vector<double> events;

  /// S(t), right-continuous step function; 1 before the first event.
  double at(double t) const;
};

/// Uses every sample regardless of its group label. Events at a time precede
/// censorings at the same time.
KmCurve kaplan_meier(std::span<const SurvivalSample> samples);

struct LogRankResult {
  double chi_square = 0.0;
  int degrees_of_freedom = 0;
  double p_value = 1.0;
  std::vector<double> observed;
  std::vector<double> expected;
};

/// G-sample log-rank test; labels must lie in [0, groups).
LogRankResult log_rank_test(std::span<const SurvivalSample> samples, std::size_t groups);

/// Upper tail of the chi-square distribution.
double chi_square_sf(double x, double df);
double chi_square_cdf(double x, double df);

}  // namespace latentdx
