#include "cptree/linear_system.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cptree/error.hpp"
#include "cptree/rng.hpp"
#include "cptree/stats.hpp"

namespace cptree::linear {

TruncatedEnvironment truncate(const QuenchedEnvironment& env, unsigned d, unsigned depth) {
  TruncatedEnvironment out{TruncatedTree(d, depth), {}, env.distribution().bound()};
  const std::size_t n = out.tree.size();
  std::vector<std::uint64_t> keys(n);
  out.weights.resize(n);
  keys[0] = env.root_key();
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t p = (i - 1) / d;
    keys[i] = QuenchedEnvironment::child_key(keys[p], static_cast<unsigned>((i - 1) % d));
  }
  for (std::size_t i = 0; i < n; ++i) out.weights[i] = env.weight_for_key(keys[i]);
  return out;
}

WeightedAdjacency::WeightedAdjacency(const TruncatedEnvironment& env, double lambda) {
  require(lambda >= 0.0, "lambda must be nonnegative");
  const std::size_t n = env.tree.size();
  offsets_.reserve(n + 1);
  offsets_.push_back(0);
  for (std::size_t x = 0; x < n; ++x) {
    double row = 0.0;
    for (std::size_t y : env.tree.neighbors_of(x)) {
      const double g = lambda * env.weights[x] * env.weights[y];
      columns_.push_back(y);
      values_.push_back(g);
      row += g;
      max_entry_ = std::max(max_entry_, g);
    }
    max_row_sum_ = std::max(max_row_sum_, row);
    offsets_.push_back(columns_.size());
  }
}

double WeightedAdjacency::entry(std::size_t x, std::size_t y) const {
  for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k)
    if (columns_[k] == y) return values_[k];
  return 0.0;
}

void WeightedAdjacency::apply(const std::vector<double>& v, std::vector<double>& out) const {
  const std::size_t n = size();
  out.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    double acc = 0.0;
    for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k) acc += values_[k] * v[columns_[k]];
    out[x] = acc;
  }
}

bool WeightedAdjacency::symmetric() const {
  for (std::size_t x = 0; x < size(); ++x)
    for (std::size_t k = offsets_[x]; k < offsets_[x + 1]; ++k)
      if (entry(columns_[k], x) != values_[k]) return false;
  return true;
}

XiMean mean_xi_exact(const TruncatedEnvironment& env, double lambda, double t) {
  require(t >= 0.0 && std::isfinite(t), "t must be a nonnegative real");
  const std::size_t n = env.tree.size();
  require(n <= kMaxExactVertices, "truncated tree exceeds 20000 vertices");
  const WeightedAdjacency g(env, lambda);
  XiMean out;
  const double c = g.max_row_sum();
  if (c == 0.0 || t == 0.0) {
    out.mean.assign(n, std::exp(-t));
    out.terms = 1;
    return out;
  }
  constexpr double kTailTolerance = 1e-9;
  constexpr std::size_t kMaxTerms = 10'000;
  const double ct = c * t;
  const double log_ct = std::log(ct);
  auto log_weight = [&](std::size_t k) {
    return -t + static_cast<double>(k) * log_ct - std::lgamma(static_cast<double>(k) + 1.0);
  };
  // Tail after term N: w_{N+1} / (1 - ct/(N+2)) once N + 2 > ct.
  auto tail_after = [&](std::size_t k) {
    const double ratio = ct / (static_cast<double>(k) + 2.0);
    if (ratio >= 1.0) return std::numeric_limits<double>::infinity();
    return std::exp(log_weight(k + 1)) / (1.0 - ratio);
  };

  std::vector<double> power(n, 1.0);  // (G/c)^k 1
  std::vector<double> next;
  std::vector<KahanSum> acc(n);
  std::size_t k = 0;
  for (;; ++k) {
    const double w = std::exp(log_weight(k));
    for (std::size_t i = 0; i < n; ++i) acc[i].add(w * power[i]);
    const double tail = tail_after(k);
    if (tail <= kTailTolerance) {
      out.tail_bound = tail;
      break;
    }
    if (k + 1 >= kMaxTerms) throw BudgetError("increase precision budget: series tail above 1e-9 after 10^4 terms");
    g.apply(power, next);
    for (std::size_t i = 0; i < n; ++i) power[i] = next[i] / c;
  }
  out.terms = k + 1;
  out.mean.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.mean[i] = acc[i].value();
  return out;
}

XiSample simulate_xi(const TruncatedEnvironment& env, double lambda, double t, std::uint64_t replicas,
                     std::uint64_t seed, unsigned threads) {
  require(env.tree.max_depth() >= 1, "truncation depth must be at least 1");
  require(t >= 0.0 && std::isfinite(t), "t must be a nonnegative real");
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(replicas >= 1, "replicas must be at least 1");
  const std::size_t n = env.tree.size();

  // Event table: n resets, then one entry per ordered neighbour pair.
  struct Event {
    std::uint32_t target;
    std::uint32_t source;  // == target marks a reset
  };
  std::vector<Event> events;
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t x = 0; x < n; ++x) {
    total += 1.0;
    events.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(x)});
    cumulative.push_back(total);
  }
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y : env.tree.neighbors_of(x)) {
      const double r = lambda * env.weights[x] * env.weights[y];
      if (r <= 0.0) continue;
      total += r;
      events.push_back({static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)});
      cumulative.push_back(total);
    }

  std::vector<std::uint64_t> root_values(replicas);
  parallel_blocks(replicas, 64, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint64_t> xi(n);
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = make_stream(seed, {tag::xi, r});
      std::fill(xi.begin(), xi.end(), 1);
      double time = 0.0;
      for (;;) {
        time += exponential(rng, total);
        if (time > t) break;
        const double u = uniform01(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it;
        const Event& e = events[static_cast<std::size_t>(it - cumulative.begin())];
        if (e.source == e.target) {
          xi[e.target] = 0;
        } else if (__builtin_add_overflow(xi[e.target], xi[e.source], &xi[e.target])) {
          throw BudgetError("xi value saturated 64 bits; reduce t or lambda");
        }
      }
      root_values[r] = xi[0];
    }
  });

  XiSample out;
  out.replicas = replicas;
  MeanAccumulator acc;
  for (auto v : root_values) {
    acc.add(static_cast<double>(v));
    if (v >= 1) ++out.alive;
  }
  out.mean = acc.mean();
  out.std_error = acc.stderr_of_mean();
  out.alive_fraction = static_cast<double>(out.alive) / static_cast<double>(replicas);
  return out;
}

double annealed_mean_upper_bound(double lambda, unsigned d, const WeightDistribution& dist, double t) {
  const double m = dist.bound();
  const double scaled = dist.moment(2) / (m * m);
  if (!(scaled > 0.0)) throw ValidationError("assumption mu(rho>0)>0 violated: E[rho^2] = 0");
  const double exponent = lambda * m * m * (static_cast<double>(d) * scaled + 1.0 / scaled) - 1.0;
  return std::exp(t * exponent) / scaled;
}

}  // namespace cptree::linear
