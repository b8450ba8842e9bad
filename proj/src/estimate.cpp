#include "cptree/estimate.hpp"

#include <algorithm>
#include <cmath>

#include "cptree/error.hpp"
#include "cptree/stats.hpp"
#include "cptree/tree.hpp"

namespace cptree::estimate {

SweepResult sweep(unsigned d, const WeightDistribution& dist, std::span<const double> lambda_grid,
                  const RunLimits& limits, std::uint64_t replicas, std::uint64_t seed, unsigned threads) {
  validate_degree(d);
  validate(limits);
  require(replicas >= 1, "replicas must be at least 1");
  require(!lambda_grid.empty() && lambda_grid.size() <= 63, "sweep grid needs between 1 and 63 rates");
  for (std::size_t k = 1; k < lambda_grid.size(); ++k)
    require(lambda_grid[k] > lambda_grid[k - 1], "sweep grid must be strictly increasing");
  const std::size_t levels = lambda_grid.size();
  const std::vector<double> grid(lambda_grid.begin(), lambda_grid.end());

  // Per replica: one outcome code per level, plus diagnostics.
  std::vector<std::uint8_t> outcome(replicas * levels);
  std::vector<CouplingDiagnostics> diag(replicas);
  parallel_blocks(replicas, 64, threads, [&](std::size_t begin, std::size_t end) {
    GraphicalContact engine(d, grid);
    for (std::size_t i = begin; i < end; ++i) {
      const QuenchedEnvironment env(environment_seed(seed, EnvironmentMode::annealed, i), dist);
      Rng rng = make_stream(seed, {tag::replica, i});
      const auto runs = engine.run(env, limits, rng, &diag[i]);
      for (std::size_t k = 0; k < levels; ++k) {
        std::uint8_t code = 0;
        if (runs[k].survived()) code = 1 + static_cast<std::uint8_t>(runs[k].censored);
        outcome[i * levels + k] = code;
      }
    }
  });

  SweepResult out;
  for (std::size_t k = 0; k < levels; ++k) {
    std::uint64_t alive = 0, capped = 0;
    for (std::uint64_t i = 0; i < replicas; ++i) {
      const auto code = outcome[i * levels + k];
      if (code) ++alive;
      if (code == 1 + static_cast<std::uint8_t>(Censor::size_cap) ||
          code == 1 + static_cast<std::uint8_t>(Censor::depth_cap))
        ++capped;
    }
    const double n = static_cast<double>(replicas);
    out.rows.push_back({grid[k], static_cast<double>(alive) / n, wilson_interval(alive, replicas),
                        static_cast<double>(capped) / n, alive, replicas});
  }
  for (const auto& dg : diag) {
    out.diagnostics.inclusion_violations += dg.inclusion_violations;
    out.diagnostics.domination_violations += dg.domination_violations;
    out.diagnostics.sir_infections += dg.sir_infections;
    out.diagnostics.rate_bound_violations += dg.rate_bound_violations;
    out.diagnostics.events += dg.events;
  }
  return out;
}

const char* to_string(Classification c) {
  switch (c) {
    case Classification::dead: return "dead";
    case Classification::alive: return "alive";
    case Classification::unresolved: return "unresolved";
  }
  return "?";
}

Classification classify(const SurvivalEstimate& s, double threshold) {
  if (s.ci.hi < threshold) return Classification::dead;
  if (s.ci.lo > threshold) return Classification::alive;
  return Classification::unresolved;
}

namespace {

SurvivalEstimate survival_at(unsigned d, const WeightDistribution& dist, const BisectOptions& o, double lambda,
                             double t_max) {
  SurvivalQuery q;
  q.d = d;
  q.lambda = lambda;
  q.limits.t_max = t_max;
  q.limits.size_cap = o.size_cap;
  q.limits.depth_cap = o.depth_cap;
  q.replicas = o.replicas;
  q.master_seed = o.seed;
  q.mode = EnvironmentMode::annealed;
  q.threads = o.threads;
  return survival_probability(dist, q);
}

}  // namespace

CriticalEstimate bisect_lambda_c(unsigned d, const WeightDistribution& dist, const BisectOptions& o) {
  validate_degree(d);
  require(o.tolerance > 0.0, "tolerance must be positive");
  require(o.replicas >= 1, "replicas must be at least 1");
  require(o.threshold > 0.0 && o.threshold < 1.0, "threshold must lie in (0, 1)");
  require(o.t_max > 0.0, "t_max must be positive");
  require(wilson_interval(0, o.replicas).hi < o.threshold,
          "replica budget too small: zero survivors cannot be classified dead at this threshold");

  CriticalEstimate out;
  auto probe = [&](double lambda) {
    const auto s = survival_at(d, dist, o, lambda, o.t_max);
    const auto c = classify(s, o.threshold);
    out.steps.push_back({lambda, s, c});
    return c;
  };

  // Starting guesses only; every end point is classified by simulation.
  const double guess = bounds::asymptote(dist) / static_cast<double>(d);
  double lo = guess / 2.0, hi = guess * 2.0;
  long budget = o.max_steps;
  auto lo_class = probe(lo);
  while (lo_class != Classification::dead && budget-- > 0) {
    hi = lo;
    lo /= 2.0;
    lo_class = probe(lo);
  }
  auto hi_class = probe(hi);
  while (hi_class != Classification::alive && budget-- > 0) {
    if (hi_class == Classification::dead) lo = hi;
    hi *= 2.0;
    hi_class = probe(hi);
  }
  if (lo_class != Classification::dead || hi_class != Classification::alive) {
    out.warning = true;
    out.warning_reason = "could not classify the starting bracket within the step budget";
  } else {
    while (hi - lo > o.tolerance) {
      if (budget-- <= 0) {
        out.warning = true;
        out.warning_reason = "step budget exhausted before reaching the tolerance";
        break;
      }
      const double mid = 0.5 * (lo + hi);
      const auto c = probe(mid);
      if (c == Classification::dead) {
        lo = mid;
      } else if (c == Classification::alive) {
        hi = mid;
      } else {
        out.warning = true;
        out.warning_reason = "midpoint survival interval straddles the threshold; replica budget too small";
        break;
      }
    }
  }
  out.lambda_dead = lo;
  out.lambda_alive = hi;
  out.sandwich = bounds::sandwich_check(d, dist, out.bracket());
  out.alive_survival_full_horizon = survival_at(d, dist, o, hi, o.t_max).estimate;
  out.alive_survival_half_horizon = survival_at(d, dist, o, hi, o.t_max / 2.0).estimate;
  return out;
}

LambdaEEstimate estimate_lambda_e(unsigned d, const WeightDistribution& dist, std::span<const double> lambda_grid,
                                  std::span<const double> time_grid, std::uint64_t replicas, std::uint64_t seed,
                                  unsigned threads, std::size_t size_cap) {
  require(!lambda_grid.empty(), "lambda grid must be nonempty");
  for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
    require(lambda_grid[k] > 0.0, "lambda grid entries must be positive");
    if (k) require(lambda_grid[k] > lambda_grid[k - 1], "lambda grid must be strictly increasing");
  }
  LambdaEEstimate out;
  for (std::size_t k = 0; k < lambda_grid.size(); ++k) {
    const double lambda = lambda_grid[k];
    DecayFit fit = decay_rate(dist, d, lambda, time_grid, replicas, derive_seed(seed, {tag::grid, k}), threads,
                              size_cap);
    const bool decaying = fit.slope + 3.0 * fit.std_error < 0.0;
    out.rows.push_back({lambda, std::move(fit), bounds::decay_exponent_bound(lambda, d, dist), decaying});
    if (decaying) out.lambda_e = lambda;
  }
  return out;
}

std::vector<AsymptoticRow> asymptotic_sweep(const WeightDistribution& dist, std::span<const unsigned> d_list,
                                            const std::optional<BisectOptions>& bisect) {
  for (std::size_t i = 1; i < d_list.size(); ++i)
    require(d_list[i] > d_list[i - 1], "degree list must be increasing");
  std::vector<AsymptoticRow> rows;
  for (unsigned d : d_list) {
    validate_degree(d);
    AsymptoticRow r;
    r.d = d;
    r.lower = bounds::lower_bound_lambda_e(d, dist);
    r.d_times_lower = d * r.lower;
    if (auto up = bounds::upper_bound_lambda_c(d, dist)) {
      r.upper = up->lambda_star;
      r.d_times_upper = d * up->lambda_star;
    }
    r.asymptote = bounds::asymptote(dist);
    if (bisect) r.estimate = bisect_lambda_c(d, dist, *bisect).bracket();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace cptree::estimate
