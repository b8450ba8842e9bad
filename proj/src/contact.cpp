#include "cptree/contact.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "cptree/bounds.hpp"
#include "cptree/error.hpp"

namespace cptree {

namespace {
constexpr std::uint64_t kRebuildInterval = 1u << 16;
}

const char* to_string(Censor c) {
  switch (c) {
    case Censor::none: return "none";
    case Censor::time_horizon: return "time_horizon";
    case Censor::size_cap: return "size_cap";
    case Censor::depth_cap: return "depth_cap";
  }
  return "?";
}

const char* to_string(EnvironmentMode m) { return m == EnvironmentMode::annealed ? "annealed" : "quenched"; }

void validate(const RunLimits& limits) {
  require(std::isfinite(limits.t_max) && limits.t_max >= 0.0, "t_max must be a nonnegative real");
  require(limits.size_cap > 0, "size_cap must be positive");
  require(limits.depth_cap > 0, "depth_cap must be positive");
  double prev = -1.0;
  for (double t : limits.checkpoints) {
    require(t > prev && t <= limits.t_max, "checkpoints must be increasing and <= t_max");
    prev = t;
  }
}

ContactProcess::ContactProcess(unsigned d, double lambda, std::optional<unsigned> truncation)
    : d_(d), lambda_(lambda), tree_(d, truncation) {
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be a nonnegative real");
}

void ContactProcess::clear_state() {
  slot_of_.clear();
  pressure_.clear();
  infected_.clear();
  rate_.clear();
  std::fill(fenwick_.begin(), fenwick_.end(), 0.0);
  time_ = 0.0;
  events_ = 0;
  updates_since_rebuild_ = 0;
  rate_violations_ = 0;
  max_depth_seen_ = 0;
  rate_sup_ = bounds::rate_sup(lambda_, d_, env_->distribution().bound());
  grow_state();
}

void ContactProcess::grow_state() {
  if (slot_of_.size() < tree_.size()) {
    slot_of_.resize(tree_.size(), LazyTree::kNone);
    pressure_.resize(tree_.size(), 0.0);
  }
}

void ContactProcess::reset(const QuenchedEnvironment& env) {
  const VertexId root = VertexId::root();
  reset(env, std::span<const VertexId>(&root, 1));
}

void ContactProcess::reset(const QuenchedEnvironment& env, std::span<const VertexId> initial) {
  env_ = &env;
  tree_.reset(env);
  clear_state();
  for (const auto& v : initial) {
    const auto n = tree_.locate(v);
    require(n.has_value(), "initial vertex " + v.to_string() + " lies outside the truncation");
    grow_state();
    if (slot_of_[*n] == LazyTree::kNone) infect(*n);
  }
}

void ContactProcess::reset_all(const QuenchedEnvironment& env) {
  require(tree_.truncation().has_value(), "reset_all requires a truncated tree");
  env_ = &env;
  tree_.reset(env);
  clear_state();
  // Breadth-first materialisation; indices grow as children are created.
  for (Index n = 0; n < tree_.size(); ++n) tree_.ensure_children(n);
  grow_state();
  for (Index n = 0; n < tree_.size(); ++n) infect(n);
}

double ContactProcess::vertex_rate(Index x) const {
  double healthy_weight = 0.0;
  tree_.for_each_neighbor(x, [&](Index z) {
    if (slot_of_[z] == LazyTree::kNone) healthy_weight += tree_.weight(z);
  });
  return 1.0 + lambda_ * tree_.weight(x) * healthy_weight;
}

void ContactProcess::set_rate(std::size_t slot, double rate) {
  const double delta = rate - rate_[slot];
  rate_[slot] = rate;
  for (std::size_t i = slot + 1; i < fenwick_.size(); i += i & (~i + 1)) fenwick_[i] += delta;
  ++updates_since_rebuild_;
}

void ContactProcess::rebuild_table() {
  std::fill(fenwick_.begin(), fenwick_.end(), 0.0);
  for (std::size_t s = 0; s < rate_.size(); ++s) fenwick_[s + 1] = rate_[s];
  for (std::size_t i = 1; i < fenwick_.size(); ++i) {
    const std::size_t j = i + (i & (~i + 1));
    if (j < fenwick_.size()) fenwick_[j] += fenwick_[i];
  }
  updates_since_rebuild_ = 0;
}

double ContactProcess::total_rate() const {
  double sum = 0.0;
  for (std::size_t i = fenwick_.size() - 1; i > 0; i -= i & (~i + 1)) sum += fenwick_[i];
  return sum;
}

std::size_t ContactProcess::find_slot(double target) const {
  const std::size_t cap = fenwick_.size() - 1;
  std::size_t pos = 0;
  for (std::size_t step = std::bit_floor(cap); step > 0; step >>= 1) {
    if (pos + step <= cap && fenwick_[pos + step] <= target) {
      pos += step;
      target -= fenwick_[pos];
    }
  }
  return std::min(pos, infected_.size() - 1);
}

void ContactProcess::check_site_rate(Index y) {
  if (slot_of_[y] != LazyTree::kNone) return;
  const double c = lambda_ * tree_.weight(y) * pressure_[y];
  if (c > rate_sup_ * (1.0 + 1e-9)) ++rate_violations_;
}

void ContactProcess::infect(Index y) {
  tree_.ensure_children(y);
  grow_state();
  const std::size_t slot = infected_.size();
  infected_.push_back(y);
  rate_.push_back(0.0);
  slot_of_[y] = static_cast<Index>(slot);
  if (fenwick_.size() < infected_.size() + 1) {
    fenwick_.assign(std::max<std::size_t>(64, 2 * infected_.size()) + 1, 0.0);
    rebuild_table();
  }
  max_depth_seen_ = std::max(max_depth_seen_, tree_.node(y).depth);
  const double wy = tree_.weight(y);
  tree_.for_each_neighbor(y, [&](Index z) {
    pressure_[z] += wy;
    if (slot_of_[z] != LazyTree::kNone)
      set_rate(slot_of_[z], vertex_rate(z));
    else
      check_site_rate(z);
  });
  set_rate(slot, vertex_rate(y));
}

void ContactProcess::recover(Index x) {
  const std::size_t slot = slot_of_[x];
  const std::size_t last = infected_.size() - 1;
  if (slot != last) {
    const Index moved = infected_[last];
    infected_[slot] = moved;
    slot_of_[moved] = static_cast<Index>(slot);
    set_rate(slot, rate_[last]);
  }
  set_rate(last, 0.0);
  infected_.pop_back();
  rate_.pop_back();
  slot_of_[x] = LazyTree::kNone;
  const double wx = tree_.weight(x);
  tree_.for_each_neighbor(x, [&](Index z) {
    pressure_[z] -= wx;
    if (slot_of_[z] != LazyTree::kNone) set_rate(slot_of_[z], vertex_rate(z));
  });
  check_site_rate(x);
}

ContactProcess::Status ContactProcess::advance(double t_until, Rng& rng, std::size_t size_cap,
                                               std::uint32_t depth_cap) {
  if (infected_.empty()) return Status::extinct;
  if (infected_.size() >= size_cap) return Status::size_cap;
  if (max_depth_seen_ >= depth_cap) return Status::depth_cap;
  for (;;) {
    if (updates_since_rebuild_ > kRebuildInterval) rebuild_table();
    const double total = total_rate();
    const double dt = exponential(rng, total);
    if (time_ + dt > t_until) {
      time_ = std::max(time_, t_until);
      return Status::time_reached;
    }
    time_ += dt;
    ++events_;
    const std::size_t slot = find_slot(uniform01(rng) * total);
    const Index x = infected_[slot];
    double v = uniform01(rng) * rate_[slot];
    if (v < 1.0) {
      recover(x);
      if (infected_.empty()) return Status::extinct;
      continue;
    }
    v -= 1.0;
    const double scale = lambda_ * tree_.weight(x);
    Index chosen = LazyTree::kNone;
    Index fallback = LazyTree::kNone;
    tree_.for_each_neighbor(x, [&](Index z) {
      if (chosen != LazyTree::kNone || slot_of_[z] != LazyTree::kNone) return;
      const double w = scale * tree_.weight(z);
      if (w <= 0.0) return;
      fallback = z;
      if (v < w)
        chosen = z;
      else
        v -= w;
    });
    if (chosen == LazyTree::kNone) chosen = fallback;  // rounding at the top of the range
    if (chosen == LazyTree::kNone) continue;
    infect(chosen);
    if (tree_.node(chosen).depth >= depth_cap) return Status::depth_cap;
    if (infected_.size() >= size_cap) return Status::size_cap;
  }
}

double ContactProcess::total_rate_recomputed() const {
  double sum = 0.0;
  for (Index x : infected_) {
    sum += 1.0;
    tree_.for_each_neighbor(x, [&](Index z) {
      if (slot_of_[z] == LazyTree::kNone) sum += lambda_ * tree_.weight(x) * tree_.weight(z);
    });
  }
  return sum;
}

double ContactProcess::check_invariants() const {
  for (Index n = 0; n < tree_.size(); ++n)
    if (tree_.weight(n) != env_->weight_of(tree_.vertex(n))) return std::numeric_limits<double>::infinity();
  const double exact = total_rate_recomputed();
  if (exact == 0.0) return std::abs(total_rate());
  return std::abs(total_rate() - exact) / exact;
}

bool ContactProcess::is_infected(const VertexId& v) const {
  Index n = 0;
  for (auto digit : v.digits()) {
    const Index c = tree_.first_child(n);
    if (c == LazyTree::kNone || digit >= d_) return false;
    n = c + digit;
  }
  return slot_of_[n] != LazyTree::kNone;
}

std::vector<VertexId> ContactProcess::infected() const {
  std::vector<VertexId> out;
  out.reserve(infected_.size());
  for (Index x : infected_) out.push_back(tree_.vertex(x));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

TrajectorySummary run_on(ContactProcess& cp, const QuenchedEnvironment& env, const RunLimits& limits, Rng& rng) {
  cp.reset(env);
  TrajectorySummary out;
  ContactProcess::Status status = ContactProcess::Status::running;
  std::size_t max_size = cp.size();
  auto step = [&](double t) {
    // Advance in slices so that the peak size is tracked between checkpoints.
    status = cp.advance(t, rng, limits.size_cap, limits.depth_cap);
    max_size = std::max(max_size, cp.size());
  };
  std::size_t next_checkpoint = 0;
  for (; next_checkpoint < limits.checkpoints.size(); ++next_checkpoint) {
    const double t = limits.checkpoints[next_checkpoint];
    step(t);
    if (status != ContactProcess::Status::time_reached) break;
    out.checkpoint_sizes.emplace_back(t, cp.size());
  }
  if (status == ContactProcess::Status::running || status == ContactProcess::Status::time_reached) step(limits.t_max);

  switch (status) {
    case ContactProcess::Status::extinct:
      out.extinction_time = cp.time();
      for (; next_checkpoint < limits.checkpoints.size(); ++next_checkpoint)
        out.checkpoint_sizes.emplace_back(limits.checkpoints[next_checkpoint], 0);
      break;
    case ContactProcess::Status::size_cap: out.censored = Censor::size_cap; break;
    case ContactProcess::Status::depth_cap: out.censored = Censor::depth_cap; break;
    default: out.censored = Censor::time_horizon; break;
  }
  out.end_time = cp.time();
  out.max_size = max_size;
  out.events = cp.events();
  out.rate_bound_violations = cp.rate_bound_violations();
  return out;
}

}  // namespace

TrajectorySummary run(const QuenchedEnvironment& env, unsigned d, double lambda, const RunLimits& limits, Rng& rng,
                      std::optional<unsigned> truncation) {
  validate(limits);
  ContactProcess cp(d, lambda, truncation);
  return run_on(cp, env, limits, rng);
}

std::uint64_t environment_seed(std::uint64_t master_seed, EnvironmentMode mode, std::uint64_t index) {
  return mode == EnvironmentMode::annealed ? derive_seed(master_seed, {tag::environment, index})
                                           : derive_seed(master_seed, {tag::environment});
}

std::vector<TrajectorySummary> run_replicas(const WeightDistribution& dist, const SurvivalQuery& q) {
  validate_degree(q.d);
  validate(q.limits);
  require(q.replicas >= 1, "replicas must be at least 1");
  if (q.environment_seed && q.mode != EnvironmentMode::quenched)
    throw ValidationError("inconsistent seeds: an environment seed requires quenched mode");
  std::vector<TrajectorySummary> out(q.replicas);
  parallel_blocks(q.replicas, 256, q.threads, [&](std::size_t begin, std::size_t end) {
    ContactProcess cp(q.d, q.lambda, q.truncation);
    std::optional<QuenchedEnvironment> env;
    if (q.mode == EnvironmentMode::quenched)
      env.emplace(q.environment_seed.value_or(environment_seed(q.master_seed, q.mode, 0)), dist);
    for (std::size_t i = begin; i < end; ++i) {
      if (q.mode == EnvironmentMode::annealed) env.emplace(environment_seed(q.master_seed, q.mode, i), dist);
      Rng rng = make_stream(q.master_seed, {tag::replica, i});
      out[i] = run_on(cp, *env, q.limits, rng);
    }
  });
  return out;
}

double SurvivalEstimate::censor_fraction() const {
  if (replicas == 0) return 0.0;
  return static_cast<double>(censored_size + censored_depth) / static_cast<double>(replicas);
}

SurvivalEstimate summarize(std::span<const TrajectorySummary> runs) {
  SurvivalEstimate est;
  est.replicas = runs.size();
  for (const auto& r : runs) {
    if (r.survived()) ++est.survivors;
    if (r.censored == Censor::time_horizon) ++est.censored_time;
    if (r.censored == Censor::size_cap) ++est.censored_size;
    if (r.censored == Censor::depth_cap) ++est.censored_depth;
    est.rate_bound_violations += r.rate_bound_violations;
  }
  if (est.replicas == 0) return est;
  est.estimate = static_cast<double>(est.survivors) / static_cast<double>(est.replicas);
  est.ci = wilson_interval(est.survivors, est.replicas);
  return est;
}

SurvivalEstimate survival_probability(const WeightDistribution& dist, const SurvivalQuery& q) {
  const auto runs = run_replicas(dist, q);
  return summarize(runs);
}

DecayFit fit_decay(std::span<const double> times, std::span<const double> survival, std::uint64_t replicas) {
  const std::size_t k = times.size();
  require(k >= 2 && survival.size() == k, "decay fit needs matching time and survival vectors");
  for (std::size_t i = 0; i < k; ++i)
    if (!(survival[i] > 0.0)) throw BudgetError("grid too long for replica budget");
  double tbar = 0.0;
  for (double t : times) tbar += t;
  tbar /= static_cast<double>(k);
  double sxx = 0.0;
  for (double t : times) sxx += (t - tbar) * (t - tbar);
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = (times[i] - tbar) / sxx;
  double slope = 0.0;
  for (std::size_t i = 0; i < k; ++i) slope += w[i] * std::log(survival[i]);
  // Cov(log S_i, log S_j) ~ (1 - S_a) / (n S_a), a = earlier of the two times.
  const double n = static_cast<double>(replicas);
  double var = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t a = std::min(i, j);
      var += w[i] * w[j] * (1.0 - survival[a]) / (n * survival[a]);
    }
  DecayFit fit;
  fit.slope = slope;
  fit.std_error = std::sqrt(std::max(0.0, var));
  fit.times.assign(times.begin(), times.end());
  fit.survival.assign(survival.begin(), survival.end());
  fit.replicas = replicas;
  return fit;
}

DecayFit decay_rate(const WeightDistribution& dist, unsigned d, double lambda, std::span<const double> time_grid,
                    std::uint64_t replicas, std::uint64_t master_seed, unsigned threads, std::size_t size_cap) {
  for (std::size_t i = 1; i < time_grid.size(); ++i)
    require(time_grid[i] > time_grid[i - 1], "time grid must be increasing");
  std::vector<double> times;
  for (double t : time_grid)
    if (t >= kDecayFitStart) times.push_back(t);
  require(times.size() >= 4, "decay fit needs at least 4 grid points at t >= 5");

  SurvivalQuery q;
  q.d = d;
  q.lambda = lambda;
  q.limits.t_max = times.back();
  q.limits.size_cap = size_cap;
  q.limits.checkpoints = times;
  q.replicas = replicas;
  q.master_seed = master_seed;
  q.threads = threads;
  const auto runs = run_replicas(dist, q);

  std::vector<std::uint64_t> alive(times.size(), 0);
  std::uint64_t violations = 0;
  for (const auto& r : runs) {
    violations += r.rate_bound_violations;
    for (std::size_t i = 0; i < times.size(); ++i)
      if (!r.extinction_time || *r.extinction_time > times[i]) ++alive[i];
  }
  std::vector<double> survival(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    survival[i] = static_cast<double>(alive[i]) / static_cast<double>(replicas);
  DecayFit fit = fit_decay(times, survival, replicas);
  fit.rate_bound_violations = violations;
  return fit;
}

namespace {

std::vector<double> fit_times(std::span<const double> time_grid) {
  for (std::size_t i = 1; i < time_grid.size(); ++i)
    require(time_grid[i] > time_grid[i - 1], "time grid must be increasing");
  std::vector<double> times;
  for (double t : time_grid)
    if (t >= kDecayFitStart) times.push_back(t);
  require(times.size() >= 4, "decay fit needs at least 4 grid points at t >= 5");
  return times;
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  double xbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xbar += x[i];
    ybar += y[i];
  }
  xbar /= static_cast<double>(x.size());
  ybar /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - xbar) * (y[i] - ybar);
    sxx += (x[i] - xbar) * (x[i] - xbar);
  }
  return sxy / sxx;
}

}  // namespace

DecayFit decay_rate_splitting(const WeightDistribution& dist, unsigned d, double lambda,
                              std::span<const double> time_grid, std::uint64_t replicas, std::uint64_t master_seed,
                              unsigned threads, std::size_t size_cap, std::size_t batches) {
  validate_degree(d);
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(batches >= 2, "splitting needs at least 2 batches");
  require(replicas / batches >= 100, "splitting needs at least 100 particles per batch");
  const std::vector<double> times = fit_times(time_grid);
  const std::size_t particles = replicas / batches;

  // Stage ends: grid times, subdivided so that no stage exceeds one time unit.
  std::vector<double> ends;
  double prev = 0.0;
  for (double t : times) {
    const auto pieces = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t - prev - 1e-12)));
    for (std::size_t k = 1; k < pieces; ++k) ends.push_back(prev + (t - prev) * static_cast<double>(k) / pieces);
    ends.push_back(t);
    prev = t;
  }

  struct Particle {
    std::uint64_t env_seed;
    std::vector<VertexId> infected;
  };
  std::vector<std::vector<double>> log_survival(batches, std::vector<double>(times.size()));
  std::uint64_t violations = 0;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::uint64_t batch_seed = derive_seed(master_seed, {tag::grid, b});
    std::vector<Particle> pool(particles);
    for (std::size_t i = 0; i < particles; ++i)
      pool[i] = {environment_seed(batch_seed, EnvironmentMode::annealed, i), {VertexId::root()}};
    std::vector<std::uint8_t> alive(particles);
    std::vector<std::uint64_t> stage_violations(particles);
    double log_s = 0.0;
    double start = 0.0;
    std::size_t next_time = 0;
    for (std::size_t s = 0; s < ends.size(); ++s) {
      const double length = ends[s] - start;
      parallel_blocks(particles, 256, threads, [&](std::size_t begin, std::size_t end) {
        ContactProcess cp(d, lambda);
        for (std::size_t i = begin; i < end; ++i) {
          const QuenchedEnvironment env(pool[i].env_seed, dist);
          cp.reset(env, pool[i].infected);
          Rng rng = make_stream(batch_seed, {tag::replica, s, i});
          const auto status = cp.advance(length, rng, size_cap);
          alive[i] = status != ContactProcess::Status::extinct;
          stage_violations[i] = cp.rate_bound_violations();
          if (alive[i]) pool[i].infected = cp.infected();
        }
      });
      std::vector<std::size_t> survivors;
      for (std::size_t i = 0; i < particles; ++i) {
        violations += stage_violations[i];
        if (alive[i]) survivors.push_back(i);
      }
      if (survivors.empty()) throw BudgetError("grid too long for replica budget");
      log_s += std::log(static_cast<double>(survivors.size()) / static_cast<double>(particles));
      if (ends[s] == times[next_time]) log_survival[b][next_time++] = log_s;
      // Resample survivors back to full strength.
      Rng pick = make_stream(batch_seed, {tag::grid, s});
      std::uniform_int_distribution<std::size_t> u(0, survivors.size() - 1);
      std::vector<Particle> next(particles);
      for (std::size_t i = 0; i < particles; ++i) next[i] = pool[survivors[u(pick)]];
      pool = std::move(next);
      start = ends[s];
    }
  }

  MeanAccumulator slope;
  for (const auto& ls : log_survival) slope.add(ols_slope(times, ls));
  DecayFit fit;
  fit.slope = slope.mean();
  fit.std_error = slope.stderr_of_mean();
  fit.times = times;
  for (std::size_t i = 0; i < times.size(); ++i) {
    MeanAccumulator s;
    for (const auto& ls : log_survival) s.add(std::exp(ls[i]));
    fit.survival.push_back(s.mean());
  }
  fit.replicas = particles * batches;
  fit.rate_bound_violations = violations;
  fit.estimator = "splitting";
  fit.batches = batches;
  return fit;
}

}  // namespace cptree
