#pragma once

#include <span>
#include <vector>

namespace latentdx {

/// Cubic (by default) B-spline basis without the intercept column, in the
/// style of R's bs(x, df): `df` functions, df - degree interior knots placed
/// at weighted quantiles of the data, boundary knots at the data range.
class SplineBasis {
 public:
  SplineBasis(double lower, double upper, std::vector<double> interior_knots, int degree);

  /// Places df - degree interior knots at weighted quantiles of `x`.
  static SplineBasis from_quantiles(std::span<const double> x, std::span<const double> weights,
                                    int df, int degree = 3);

  int df() const { return static_cast<int>(interior_.size()) + degree_; }
  int degree() const { return degree_; }
  double lower() const { return lower_; }
  double upper() const { return upper_; }
  const std::vector<double>& interior_knots() const { return interior_; }

  /// Evaluates the df basis functions at x (clamped to the boundary knots).
  std::vector<double> evaluate(double x) const;
  bool inside(double x) const { return x >= lower_ && x <= upper_; }

 private:
  double lower_;
  double upper_;
  std::vector<double> interior_;
  int degree_;
  std::vector<double> knots_;  // full knot vector with repeated boundaries
};

}  // namespace latentdx
