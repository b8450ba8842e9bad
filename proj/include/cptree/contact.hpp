#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cptree/lazy_tree.hpp"
#include "cptree/rng.hpp"
#include "cptree/stats.hpp"
#include "cptree/weights.hpp"

namespace cptree {

enum class Censor { none, time_horizon, size_cap, depth_cap };
const char* to_string(Censor c);

struct RunLimits {
  double t_max = 200.0;
  std::size_t size_cap = 1'000'000;
  std::uint32_t depth_cap = 10'000;
  /// Times at which |C_t| is recorded (ascending, <= t_max).
  std::vector<double> checkpoints;
};

void validate(const RunLimits& limits);

struct TrajectorySummary {
  std::optional<double> extinction_time;
  Censor censored = Censor::none;
  double end_time = 0.0;
  std::vector<std::pair<double, std::size_t>> checkpoint_sizes;
  std::size_t max_size = 0;
  std::uint64_t events = 0;
  std::uint64_t rate_bound_violations = 0;

  /// Censoring by cap or horizon counts as survival.
  bool survived() const { return !extinction_time.has_value(); }
};

/// Contact process eta_t on T^d (optionally truncated) in a fixed
/// environment, simulated exactly by the direct Gillespie method. Each
/// infected x carries the rate 1 + lambda rho(x) sum_{healthy y ~ x} rho(y) in
/// a Fenwick table; an event picks x by rate, then recovery or one healthy
/// neighbour proportionally to its weight.
class ContactProcess {
 public:
  enum class Status { running, extinct, time_reached, size_cap, depth_cap };

  ContactProcess(unsigned d, double lambda, std::optional<unsigned> truncation = std::nullopt);

  /// Infected set becomes {O}; time 0.
  void reset(const QuenchedEnvironment& env);
  /// Infected set becomes `initial` (each must lie inside the truncation).
  void reset(const QuenchedEnvironment& env, std::span<const VertexId> initial);
  /// Every vertex of the truncated tree infected. Requires a truncation.
  void reset_all(const QuenchedEnvironment& env);

  /// Runs until time t_until, extinction, or a cap. t_until may be revisited.
  Status advance(double t_until, Rng& rng, std::size_t size_cap = static_cast<std::size_t>(-1),
                 std::uint32_t depth_cap = static_cast<std::uint32_t>(-1));

  double time() const { return time_; }
  std::size_t size() const { return infected_.size(); }
  bool extinct() const { return infected_.empty(); }
  double lambda() const { return lambda_; }
  /// Current total transition rate (from the rate table).
  double total_rate() const;
  /// Total rate recomputed from scratch: |C| + lambda sum_x sum_{healthy y~x} rho(x)rho(y).
  double total_rate_recomputed() const;
  /// Rechecks cached weights against the environment and the rate table
  /// against a recomputation; returns the largest relative discrepancy found,
  /// or +inf when a cached weight differs.
  double check_invariants() const;

  bool is_infected(const VertexId& v) const;
  std::vector<VertexId> infected() const;
  std::uint64_t events() const { return events_; }
  std::uint64_t rate_bound_violations() const { return rate_violations_; }
  std::size_t touched_vertices() const { return tree_.size(); }

 private:
  using Index = LazyTree::Index;

  void clear_state();
  void grow_state();
  void infect(Index y);
  void recover(Index x);
  double vertex_rate(Index x) const;
  void set_rate(std::size_t slot, double rate);
  std::size_t find_slot(double target) const;
  void rebuild_table();
  void check_site_rate(Index y);

  unsigned d_;
  double lambda_;
  double rate_sup_;
  const QuenchedEnvironment* env_ = nullptr;
  LazyTree tree_;
  std::vector<Index> slot_of_;     // per node; kNone if healthy
  std::vector<double> pressure_;   // per node: sum of infected neighbour weights
  std::vector<Index> infected_;    // per slot
  std::vector<double> rate_;       // per slot
  std::vector<double> fenwick_;    // 1-based over slots
  double time_ = 0.0;
  std::uint64_t events_ = 0;
  std::uint64_t updates_since_rebuild_ = 0;
  std::uint64_t rate_violations_ = 0;
  std::uint32_t max_depth_seen_ = 0;
};

/// One trajectory from C_0 = {O} up to extinction or the first cap.
TrajectorySummary run(const QuenchedEnvironment& env, unsigned d, double lambda, const RunLimits& limits,
                      Rng& rng, std::optional<unsigned> truncation = std::nullopt);

enum class EnvironmentMode { annealed, quenched };
const char* to_string(EnvironmentMode m);

struct SurvivalQuery {
  unsigned d = 2;
  double lambda = 0.0;
  RunLimits limits;
  std::uint64_t replicas = 1000;
  std::uint64_t master_seed = 1;
  EnvironmentMode mode = EnvironmentMode::annealed;
  std::optional<unsigned> truncation;
  unsigned threads = 0;
  /// Quenched mode only: use this environment seed instead of one derived from master_seed.
  std::optional<std::uint64_t> environment_seed;
};

struct SurvivalEstimate {
  double estimate = 0.0;
  Interval ci;
  std::uint64_t replicas = 0;
  std::uint64_t survivors = 0;
  std::uint64_t censored_time = 0;
  std::uint64_t censored_size = 0;
  std::uint64_t censored_depth = 0;
  std::uint64_t rate_bound_violations = 0;
  double censor_fraction() const;
};

/// Environment seed used for replica `index` under `mode`.
std::uint64_t environment_seed(std::uint64_t master_seed, EnvironmentMode mode, std::uint64_t index);

/// Fraction of replicas alive (or censored) at t_max with a Wilson 95%
/// interval. Annealed mode draws a fresh environment per replica; quenched
/// mode keeps one.
SurvivalEstimate survival_probability(const WeightDistribution& dist, const SurvivalQuery& query);

/// Survival statistics of a batch of trajectories.
SurvivalEstimate summarize(std::span<const TrajectorySummary> runs);

/// Per-replica outcomes, in replica order, for callers that post-process.
std::vector<TrajectorySummary> run_replicas(const WeightDistribution& dist, const SurvivalQuery& query);

struct DecayFit {
  double slope = 0.0;
  double std_error = 0.0;
  std::vector<double> times;
  std::vector<double> survival;
  std::uint64_t replicas = 0;
  std::uint64_t rate_bound_violations = 0;
  /// "direct" or "splitting".
  std::string estimator = "direct";
  std::size_t batches = 1;
};

/// Earliest time admitted into a decay fit; earlier grid points are dropped.
inline constexpr double kDecayFitStart = 5.0;

/// Least-squares slope of log(empirical survival) against t. The standard
/// error uses the delta method with the full multinomial covariance of the
/// nested survival indicators. Throws BudgetError if any fitted grid point has
/// no survivors.
DecayFit decay_rate(const WeightDistribution& dist, unsigned d, double lambda, std::span<const double> time_grid,
                    std::uint64_t replicas, std::uint64_t master_seed, unsigned threads = 0,
                    std::size_t size_cap = 1'000'000);

/// Same fit with survival estimated by fixed-effort splitting: `replicas`
/// particles per batch stage are advanced over stages of length <= 1; at each
/// stage end the survivors (process state and environment together) are
/// resampled back to full strength, and log S(t) is the sum of the per-stage
/// log survival fractions. The slope is the mean over `batches` independent
/// batches of replicas/batches particles; its standard error is the batch
/// standard deviation over sqrt(batches). Reaches survival levels far below
/// 1/replicas. BudgetError if a stage loses every particle.
DecayFit decay_rate_splitting(const WeightDistribution& dist, unsigned d, double lambda,
                              std::span<const double> time_grid, std::uint64_t replicas, std::uint64_t master_seed,
                              unsigned threads = 0, std::size_t size_cap = 1'000'000, std::size_t batches = 10);

/// The fit itself, on survival fractions estimated from `replicas` runs.
DecayFit fit_decay(std::span<const double> times, std::span<const double> survival, std::uint64_t replicas);

}  // namespace cptree
