#include "cptree/sir.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cptree/bounds.hpp"
#include "cptree/error.hpp"
#include "cptree/stats.hpp"
#include "cptree/tree.hpp"

namespace cptree::sir {

double EdgeKernels::pass(double a, double b) const {
  const double r = lambda * a * b;
  return r / (1.0 + r);
}

double EdgeKernels::split_exact(double a, double b, double c) const {
  const double r1 = lambda * a * b;
  const double r2 = lambda * a * c;
  if (r1 == 0.0 || r2 == 0.0) return 0.0;
  // 1 - 1/(1+r1) - 1/(1+r2) + 1/(1+r1+r2), rearranged to avoid cancellation.
  return r1 * r2 * (2.0 + r1 + r2) / ((1.0 + r1) * (1.0 + r2) * (1.0 + r1 + r2));
}

double EdgeKernels::split_bound(double a, double b, double c) const {
  const double r1 = lambda * a * b;
  const double r2 = lambda * a * c;
  return 2.0 * r1 * r2 / ((1.0 + r1) * (1.0 + r2));
}

double split_kernel_exact(double lambda, double a, double b, double c) {
  require(a >= 0.0 && b >= 0.0 && c >= 0.0, "weights must be nonnegative");
  require(lambda >= 0.0, "lambda must be nonnegative");
  return EdgeKernels{lambda}.split_exact(a, b, c);
}

GenerationSizes simulate_sir(const QuenchedEnvironment& env, unsigned d, double lambda, std::size_t n_max, Rng& rng,
                             std::uint64_t generation_cap) {
  validate_degree(d);
  require(n_max >= 1, "n_max must be at least 1");
  require(lambda >= 0.0, "lambda must be nonnegative");
  struct Site {
    std::uint64_t key;
    double weight;
  };
  GenerationSizes out;
  out.sizes.assign(n_max + 1, 0);
  std::vector<Site> level{{env.root_key(), env.weight_for_key(env.root_key())}};
  std::vector<Site> next;
  out.sizes[0] = 1;
  for (std::size_t n = 0; n < n_max && !level.empty(); ++n) {
    next.clear();
    for (const Site& x : level) {
      const double hold = exponential(rng, 1.0);
      for (unsigned j = 0; j < d; ++j) {
        const std::uint64_t key = QuenchedEnvironment::child_key(x.key, j);
        const double w = env.weight_for_key(key);
        if (exponential(rng, lambda * x.weight * w) < hold) next.push_back({key, w});
      }
      if (next.size() > generation_cap) throw BudgetError("SIR generation exceeds the size guard");
    }
    out.sizes[n + 1] = next.size();
    std::swap(level, next);
  }
  return out;
}

MomentEstimate simulate_moments(unsigned d, const WeightDistribution& dist, double lambda, std::size_t n_max,
                                std::uint64_t runs, std::uint64_t seed, unsigned threads) {
  require(runs >= 1, "runs must be at least 1");
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (runs + kBlock - 1) / kBlock;
  struct Acc {
    std::vector<MeanAccumulator> first, second;
  };
  std::vector<Acc> partial(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    Acc& acc = partial[b];
    acc.first.resize(n_max + 1);
    acc.second.resize(n_max + 1);
    const std::uint64_t end = std::min<std::uint64_t>(runs, (b + 1) * kBlock);
    for (std::uint64_t i = b * kBlock; i < end; ++i) {
      const QuenchedEnvironment env(derive_seed(seed, {tag::environment, i}), dist);
      Rng rng = make_stream(seed, {tag::sir, i});
      const auto sizes = simulate_sir(env, d, lambda, n_max, rng).sizes;
      for (std::size_t n = 0; n <= n_max; ++n) {
        const double s = static_cast<double>(sizes[n]);
        acc.first[n].add(s);
        acc.second[n].add(s * s);
      }
    }
  });
  MomentEstimate out;
  out.runs = runs;
  std::vector<MeanAccumulator> first(n_max + 1), second(n_max + 1);
  for (const Acc& acc : partial)
    for (std::size_t n = 0; n <= n_max; ++n) {
      first[n].merge(acc.first[n]);
      second[n].merge(acc.second[n]);
    }
  for (std::size_t n = 0; n <= n_max; ++n) {
    out.first.push_back(first[n].mean());
    out.first_se.push_back(first[n].stderr_of_mean());
    out.second.push_back(second[n].mean());
    out.second_se.push_back(second[n].stderr_of_mean());
  }
  return out;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// A nonnegative vector stored as v * exp(log_scale) with max(v) == 1.
struct Scaled {
  std::vector<double> v;
  double log_scale = 0.0;

  void normalize() {
    const double m = *std::max_element(v.begin(), v.end());
    if (m == 0.0) {
      log_scale = kNegInf;
      return;
    }
    for (double& x : v) x /= m;
    log_scale += std::log(m);
  }
};

double log_sum(const std::vector<double>& logs) {
  double top = kNegInf;
  for (double l : logs) top = std::max(top, l);
  if (top == kNegInf) return kNegInf;
  KahanSum acc;
  for (double l : logs) acc.add(std::exp(l - top));
  return top + std::log(acc.value());
}

double log_dot(const std::vector<double>& a, const std::vector<double>& b) {
  KahanSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.add(a[i] * b[i]);
  return acc.value() > 0.0 ? std::log(acc.value()) : kNegInf;
}

}  // namespace

std::vector<LogMoments> log_moments(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n_max,
                                    Split split) {
  validate_degree(d);
  require(lambda >= 0.0, "lambda must be nonnegative");
  const std::size_t m = dist.size();
  const EdgeKernels kernels{lambda};
  std::vector<double> p(m), h(m * m);
  for (std::size_t j = 0; j < m; ++j) p[j] = dist.probability(j);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t k = 0; k < m; ++k) h[j * m + k] = kernels.pass(dist.value(j), dist.value(k));

  // f[i]: expected product over a tail of i edges given its entry weight.
  // pi[k]: expected product over a prefix of k edges jointly with the end weight.
  std::vector<Scaled> f(n_max + 1), pi(n_max + 1);
  f[0].v.assign(m, 1.0);
  pi[0].v = p;
  pi[0].normalize();
  for (std::size_t i = 0; i < n_max; ++i) {
    f[i + 1].v.assign(m, 0.0);
    pi[i + 1].v.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        f[i + 1].v[j] += p[k] * h[j * m + k] * f[i].v[k];
        pi[i + 1].v[k] += pi[i].v[j] * h[j * m + k] * p[k];
      }
    f[i + 1].log_scale = f[i].log_scale;
    pi[i + 1].log_scale = pi[i].log_scale;
    f[i + 1].normalize();
    pi[i + 1].normalize();
  }

  // split[i](j) = sum_{a,b} p_a p_b q(v_j; v_a, v_b) f_i(a) f_i(b), scaled by exp(2 log_scale of f_i).
  std::vector<double> q(m * m * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        const double vj = dist.value(j), va = dist.value(a), vb = dist.value(b);
        q[(j * m + a) * m + b] =
            split == Split::exact ? kernels.split_exact(vj, va, vb) : kernels.split_bound(vj, va, vb);
      }
  std::vector<std::vector<double>> split_tail(n_max + 1, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i <= n_max; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      KahanSum acc;
      for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
          acc.add(p[a] * p[b] * q[(j * m + a) * m + b] * f[i].v[a] * f[i].v[b]);
      split_tail[i][j] = acc.value();
    }

  const double log_d = std::log(static_cast<double>(d));
  const double log_dm1 = std::log(d - 1.0);
  std::vector<LogMoments> out;
  out.reserve(n_max + 1);
  std::vector<double> terms;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const double lm1 = static_cast<double>(n) * log_d + f[n].log_scale + log_dot(p, f[n].v);
    terms.assign(1, lm1);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t tail = n - k - 1;
      const double s = log_dot(pi[k].v, split_tail[tail]);
      terms.push_back(static_cast<double>(2 * n - k - 1) * log_d + log_dm1 + pi[k].log_scale +
                      2.0 * f[tail].log_scale + s);
    }
    out.push_back({lm1, log_sum(terms)});
  }
  return out;
}

double first_moment_exact(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n) {
  return std::exp(log_moments(lambda, d, dist, n).back().log_first);
}

double second_moment_exact(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n, Split split) {
  return std::exp(log_moments(lambda, d, dist, n, split).back().log_second);
}

double RatioSequence::min_ratio() const {
  double m = 1.0;
  for (const auto& r : rows) m = std::min(m, r.ratio);
  return m;
}

RatioSequence survival_lower_bound_sequence(double lambda, unsigned d, const WeightDistribution& dist,
                                            std::size_t n_max) {
  require(lambda > 0.0, "lambda must be positive");
  RatioSequence out;
  const double m = dist.bound();
  const double e2 = dist.moment(2);
  if (!(e2 > 0.0)) throw ValidationError("assumption mu(rho>0)>0 violated: E[rho^2] = 0");
  out.condition_value = bounds::upper_condition_value(lambda, dist);
  out.condition_holds = out.condition_value < static_cast<double>(d);
  out.c_lambda_m = 2.0 * m * m * (1.0 + lambda * m * m) * (1.0 + lambda * m * m) / e2;

  const auto exact = log_moments(lambda, d, dist, n_max, Split::exact);
  const auto bound = log_moments(lambda, d, dist, n_max, Split::product_bound);
  for (std::size_t n = 0; n <= n_max; ++n) {
    if (exact[n].log_first == kNegInf || std::exp(exact[n].log_first) == 0.0) {
      out.truncated = true;
      break;
    }
    const double ratio = std::exp(2.0 * exact[n].log_first - exact[n].log_second);
    out.rows.push_back({n, std::exp(exact[n].log_first), std::exp(exact[n].log_second),
                        std::exp(bound[n].log_second), ratio});
  }
  return out;
}

}  // namespace cptree::sir
