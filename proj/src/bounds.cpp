#include "cptree/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cptree/error.hpp"

namespace cptree::bounds {

namespace {

double checked_second_moment(const WeightDistribution& dist) {
  const double m2 = dist.moment(2);
  if (!(m2 > 0.0)) throw ValidationError("assumption mu(rho>0)>0 violated: E[rho^2] = 0");
  return m2;
}

constexpr double kTangency = 1e-12;

}  // namespace

double lower_bound_lambda_e(unsigned d, const WeightDistribution& dist) {
  const double m2 = checked_second_moment(dist);
  const double m4 = std::pow(dist.bound(), 4);
  return 1.0 / (static_cast<double>(d) * m2 + m4 / m2);
}

std::optional<UpperBound> upper_bound_lambda_c(unsigned d, const WeightDistribution& dist) {
  const double m2 = checked_second_moment(dist);
  const double mm = dist.bound() * dist.bound();
  const double a = mm * mm;
  // a l^2 - b l + 1 < 0 with b = d E[rho^2] - 2 M^2.
  const double b = static_cast<double>(d) * m2 - 2.0 * mm;
  const double disc = b * b - 4.0 * a;
  if (b <= 0.0 || disc <= kTangency) return std::nullopt;
  const double root = std::sqrt(disc);
  const double hi = (b + root) / (2.0 * a);
  // Product of the roots is 1/a; this form avoids cancellation in b - root.
  const double lo = 2.0 / (b + root);
  return UpperBound{lo, {lo, hi}};
}

double asymptote(const WeightDistribution& dist) { return 1.0 / checked_second_moment(dist); }

double rate_sup(double lambda, unsigned d, double bound_m) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  return std::max(1.0, lambda * bound_m * bound_m * (static_cast<double>(d) + 1.0));
}

double upper_condition_value(double lambda, const WeightDistribution& dist) {
  require(lambda > 0.0, "lambda must be positive");
  const double mm = dist.bound() * dist.bound();
  return (1.0 + lambda * mm) * (1.0 + lambda * mm) / (lambda * checked_second_moment(dist));
}

double scaled_condition(double gamma, unsigned d, const WeightDistribution& dist) {
  const double m2 = checked_second_moment(dist);
  const double lambda = gamma / (static_cast<double>(d) * m2);
  return upper_condition_value(lambda, dist) / static_cast<double>(d);
}

double decay_exponent_bound(double lambda, unsigned d, const WeightDistribution& dist) {
  const double m2 = checked_second_moment(dist);
  return lambda * (static_cast<double>(d) * m2 + std::pow(dist.bound(), 4) / m2) - 1.0;
}

SandwichResult sandwich_check(double lower, std::optional<double> upper, const Interval& ci) {
  const double hi = upper.value_or(std::numeric_limits<double>::infinity());
  SandwichResult out{Verdict::pass, lower, upper, "estimate interval meets the analytic sandwich"};
  if (ci.hi < lower) {
    out.verdict = Verdict::fail;
    out.reason = "estimate interval lies entirely below the certified lower bound";
  } else if (ci.lo > hi) {
    out.verdict = Verdict::fail;
    out.reason = "estimate interval lies entirely above the certified upper bound";
  }
  return out;
}

SandwichResult sandwich_check(unsigned d, const WeightDistribution& dist, const Interval& ci) {
  std::optional<double> upper;
  if (auto ub = upper_bound_lambda_c(d, dist)) upper = ub->lambda_star;
  return sandwich_check(lower_bound_lambda_e(d, dist), upper, ci);
}

BoundsReport report(unsigned d, const WeightDistribution& dist) {
  validate_degree(d);
  BoundsReport r{};
  r.d = d;
  r.mean_rho = dist.moment(1);
  r.second_moment = checked_second_moment(dist);
  r.bound_m = dist.bound();
  r.lambda_e_lower = lower_bound_lambda_e(d, dist);
  if (auto ub = upper_bound_lambda_c(d, dist)) {
    r.lambda_c_upper = ub->lambda_star;
    r.upper_condition_interval = ub->interval;
    r.rate_sup_at_upper = rate_sup(ub->lambda_star, d, dist.bound());
  }
  r.asymptote = asymptote(dist);
  r.rate_sup_at_lower = rate_sup(r.lambda_e_lower, d, dist.bound());
  return r;
}

}  // namespace cptree::bounds
