#include "latentdx/spline.hpp"

#include <algorithm>
#include <numeric>

#include "latentdx/error.hpp"

namespace latentdx {

SplineBasis::SplineBasis(double lower, double upper, std::vector<double> interior_knots, int degree)
    : lower_(lower), upper_(upper), interior_(std::move(interior_knots)), degree_(degree) {
  if (degree_ < 0) throw ConfigError("spline degree must be non-negative");
  if (!(lower_ < upper_)) throw ConfigError("spline boundary knots must be increasing");
  double previous = lower_;
  for (double k : interior_) {
    if (!(k > previous)) throw ConfigError("spline knots must be strictly increasing");
    previous = k;
  }
  if (!(upper_ > previous)) throw ConfigError("spline knots must be strictly increasing");
  if (df() < 1) throw ConfigError("spline basis needs df >= 1");
  knots_.assign(static_cast<std::size_t>(degree_) + 1, lower_);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree_) + 1, upper_);
}

SplineBasis SplineBasis::from_quantiles(std::span<const double> x, std::span<const double> weights,
                                        int df, int degree) {
  if (x.empty()) throw ConfigError("cannot place spline knots without data");
  degree = std::min(degree, df);
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  const double lower = x[order.front()];
  const double upper = x[order.back()];
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> interior;
  const int n_interior = df - degree;
  for (int j = 1; j <= n_interior; ++j) {
    const double target = total * j / (n_interior + 1);
    double cumulative = 0.0;
    for (auto i : order) {
      cumulative += weights[i];
      if (cumulative >= target) {
        if (x[i] > lower && x[i] < upper && (interior.empty() || x[i] > interior.back()))
          interior.push_back(x[i]);
        break;
      }
    }
  }
  if (static_cast<int>(interior.size()) < n_interior)
    throw ConfigError("too few distinct ages to place spline knots");
  return SplineBasis(lower, upper, std::move(interior), degree);
}

std::vector<double> SplineBasis::evaluate(double x) const {
  x = std::clamp(x, lower_, upper_);
  const int p = degree_;
  // Knot span: largest i with knots_[i] <= x < knots_[i+1], restricted to the
  // last non-degenerate span at the upper boundary.
  const int last_span = static_cast<int>(knots_.size()) - p - 2;
  int span = p;
  while (span < last_span && x >= knots_[static_cast<std::size_t>(span) + 1]) ++span;

  // Cox-de Boor triangle for the p + 1 non-zero functions.
  std::vector<double> N(static_cast<std::size_t>(p) + 1, 0.0), left(N.size()), right(N.size());
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots_[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? N[r] / denom : 0.0;
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
  const int n_full = static_cast<int>(knots_.size()) - p - 1;
  std::vector<double> full(static_cast<std::size_t>(n_full), 0.0);
  for (int r = 0; r <= p; ++r) full[static_cast<std::size_t>(span - p + r)] = N[r];
  // Drop the first function so the basis excludes the intercept.
  return std::vector<double>(full.begin() + 1, full.end());
}

}  // namespace latentdx
