#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cptree/bounds.hpp"
#include "cptree/contact.hpp"
#include "cptree/coupled.hpp"
#include "cptree/weights.hpp"

namespace cptree::estimate {

struct SweepRow {
  double lambda;
  double estimate;
  Interval ci;
  double censor_fraction;
  std::uint64_t survivors;
  std::uint64_t replicas;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  CouplingDiagnostics diagnostics;
};

/// Annealed survival to t_max over an increasing grid of rates (at most 63),
/// with every replica running all rates on one graphical representation, so
/// the survival column is non-decreasing by construction.
SweepResult sweep(unsigned d, const WeightDistribution& dist, std::span<const double> lambda_grid,
                  const RunLimits& limits, std::uint64_t replicas, std::uint64_t seed, unsigned threads = 0);

struct BisectOptions {
  double t_max = 200.0;
  std::uint64_t replicas = 2000;
  double tolerance = 0.01;
  std::uint64_t seed = 1;
  /// Dead iff the Wilson upper limit is below this; alive iff the lower limit is above it.
  double threshold = 0.005;
  std::size_t size_cap = 10'000;
  std::uint32_t depth_cap = 10'000;
  unsigned max_steps = 40;
  unsigned threads = 0;
};

enum class Classification { dead, alive, unresolved };
const char* to_string(Classification c);

struct BisectStep {
  double lambda;
  SurvivalEstimate survival;
  Classification classification;
};

struct CriticalEstimate {
  double lambda_dead = 0.0;
  double lambda_alive = 0.0;
  /// Set when the bracket could not be narrowed to the tolerance.
  bool warning = false;
  std::string warning_reason;
  std::vector<BisectStep> steps;
  bounds::SandwichResult sandwich;
  /// Survival at lambda_alive at half the horizon and at the full horizon.
  double alive_survival_half_horizon = 0.0;
  double alive_survival_full_horizon = 0.0;
  Interval bracket() const { return {lambda_dead, lambda_alive}; }
};

Classification classify(const SurvivalEstimate& s, double threshold);

/// Bisection on annealed survival at t_max. The starting bracket is widened
/// geometrically until both ends classify; an unresolved midpoint stops the
/// search with the widest classified bracket and a warning.
CriticalEstimate bisect_lambda_c(unsigned d, const WeightDistribution& dist, const BisectOptions& options);

struct DecayRow {
  double lambda;
  DecayFit fit;
  /// lambda (d E rho^2 + M^4/E rho^2) - 1.
  double analytic_bound;
  bool decaying;
};

struct LambdaEEstimate {
  std::vector<DecayRow> rows;
  /// Largest grid rate whose slope is significantly negative.
  std::optional<double> lambda_e;
};

/// Every grid rate must be positive. Errors from decay_rate propagate.
LambdaEEstimate estimate_lambda_e(unsigned d, const WeightDistribution& dist, std::span<const double> lambda_grid,
                                  std::span<const double> time_grid, std::uint64_t replicas, std::uint64_t seed,
                                  unsigned threads = 0, std::size_t size_cap = 1'000'000);

struct AsymptoticRow {
  unsigned d;
  double lower;
  std::optional<double> upper;
  double d_times_lower;
  std::optional<double> d_times_upper;
  double asymptote;
  std::optional<Interval> estimate;
};

/// Analytic bounds times d for each d, optionally with a bisection estimate.
std::vector<AsymptoticRow> asymptotic_sweep(const WeightDistribution& dist, std::span<const unsigned> d_list,
                                            const std::optional<BisectOptions>& bisect = std::nullopt);

}  // namespace cptree::estimate
