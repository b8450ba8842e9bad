#pragma once

#include <optional>
#include <string>

#include "cptree/stats.hpp"
#include "cptree/weights.hpp"

namespace cptree::bounds {

/// (d E[rho^2] + M^4 / E[rho^2])^{-1}, the certified lower bound on the
/// exponential critical value (and hence on lambda_c).
double lower_bound_lambda_e(unsigned d, const WeightDistribution& dist);

struct UpperBound {
  /// Lower endpoint of the certifying interval: lambda_c <= lambda_star.
  double lambda_star;
  /// Open interval of lambda where (1 + lambda M^2)^2 < d lambda E[rho^2].
  Interval interval;
};

/// Solves M^4 l^2 + (2M^2 - d E[rho^2]) l + 1 < 0. Empty when the
/// discriminant is <= 1e-12 (tangency is not certifying).
std::optional<UpperBound> upper_bound_lambda_c(unsigned d, const WeightDistribution& dist);

/// 1 / E[rho^2], the common limit of d lambda_c(d) and d lambda_e(d).
double asymptote(const WeightDistribution& dist);

/// max{1, lambda M^2 (d+1)}: uniform bound on every single-site flip rate.
double rate_sup(double lambda, unsigned d, double bound_m);

/// (1 + lambda M^2)^2 / (lambda E[rho^2]); the upper bound applies when this is < d.
double upper_condition_value(double lambda, const WeightDistribution& dist);

/// For lambda = gamma / (d E[rho^2]): (1 + lambda M^2)^2 / (d lambda E[rho^2]),
/// which tends to 1/gamma as d grows.
double scaled_condition(double gamma, unsigned d, const WeightDistribution& dist);

/// Exponential-rate bound for the annealed survival probability:
/// lambda (d E[rho^2] + M^4/E[rho^2]) - 1. Negative below the lower bound.
double decay_exponent_bound(double lambda, unsigned d, const WeightDistribution& dist);

enum class Verdict { pass, fail };

struct SandwichResult {
  Verdict verdict;
  double lower;
  std::optional<double> upper;
  std::string reason;
};

/// Does the estimate's interval meet [lower, upper] (upper = +inf when the
/// upper bound does not exist)? A CI entirely outside is a hard failure.
SandwichResult sandwich_check(unsigned d, const WeightDistribution& dist, const Interval& estimate_ci);
SandwichResult sandwich_check(double lower, std::optional<double> upper, const Interval& estimate_ci);

struct BoundsReport {
  unsigned d;
  double mean_rho;
  double second_moment;
  double bound_m;
  double lambda_e_lower;
  std::optional<double> lambda_c_upper;
  std::optional<Interval> upper_condition_interval;
  double asymptote;
  /// rate_sup evaluated at lambda_e_lower and lambda_c_upper (when present).
  double rate_sup_at_lower;
  std::optional<double> rate_sup_at_upper;
};

BoundsReport report(unsigned d, const WeightDistribution& dist);

}  // namespace cptree::bounds
