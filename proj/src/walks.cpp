#include "cptree/walks.hpp"

#include <algorithm>
#include <cmath>

#include "cptree/error.hpp"
#include "cptree/stats.hpp"
#include "cptree/tree.hpp"

namespace cptree::walks {

DistanceDistribution distance_pmf(unsigned d, std::size_t n) {
  validate_degree(d);
  const double out = static_cast<double>(d) / (d + 1.0);
  const double in = 1.0 / (d + 1.0);
  std::vector<double> cur(n + 1, 0.0), next(n + 1, 0.0);
  cur[0] = 1.0;
  for (std::size_t step = 0; step < n; ++step) {
    std::fill(next.begin(), next.end(), 0.0);
    // After `step` steps mass sits on k <= step with k == step (mod 2).
    for (std::size_t k = step % 2; k <= step; k += 2) {
      const double p = cur[k];
      if (p == 0.0) continue;
      if (k == 0) {
        next[1] += p;
      } else {
        next[k + 1] += p * out;
        next[k - 1] += p * in;
      }
    }
    std::swap(cur, next);
  }
  return {n, std::move(cur)};
}

double distance_gen_fn(const DistanceDistribution& dist, double x) {
  require(x > 0.0 && x <= 1.0, "x must lie in (0, 1]");
  KahanSum acc;
  double power = 1.0;
  for (std::size_t k = 0; k < dist.pmf.size(); ++k) {
    acc.add(dist.pmf[k] * power);
    power *= x;
  }
  return acc.value();
}

double distance_gen_fn(unsigned d, std::size_t n, double x) {
  require(x > 0.0 && x <= 1.0, "x must lie in (0, 1]");
  return distance_gen_fn(distance_pmf(d, n), x);
}

double distance_gen_bound(unsigned d, std::size_t n, double x) {
  validate_degree(d);
  require(x > 0.0 && x <= 1.0, "x must lie in (0, 1]");
  const double base = d * x / (d + 1.0) + 1.0 / ((d + 1.0) * x);
  return std::pow(base, static_cast<double>(n));
}

double tau_pmf(unsigned d, std::size_t k) {
  validate_degree(d);
  return std::pow(static_cast<double>(d), -static_cast<double>(k)) * (1.0 - 1.0 / d);
}

double tau_mgf(unsigned d, double s) {
  validate_degree(d);
  require(s > 0.0, "s must be positive");
  if (s >= d) throw ValidationError("series diverges: s must be below d");
  return (d - 1.0) / (d - s);
}

double tau_mgf_partial(unsigned d, double s, std::size_t terms) {
  validate_degree(d);
  KahanSum acc;
  const double ratio = s / d;
  double term = 1.0 - 1.0 / d;
  for (std::size_t k = 0; k < terms; ++k) {
    acc.add(term);
    term *= ratio;
  }
  return acc.value();
}

PairWalk sample_pair_walk(unsigned d, std::size_t n, Rng& rng) {
  validate_degree(d);
  require(n >= 1, "n must be at least 1");
  PairWalk w;
  w.first.reserve(n);
  w.second.reserve(n);
  std::uniform_int_distribution<unsigned> digit(0, d - 1);
  bool together = true;
  for (std::size_t i = 0; i < n; ++i) {
    w.first.push_back(static_cast<std::uint16_t>(digit(rng)));
    w.second.push_back(static_cast<std::uint16_t>(digit(rng)));
    // Child-only walks never meet again once they split.
    if (together && w.first.back() == w.second.back())
      ++w.tau;
    else
      together = false;
  }
  return w;
}

std::vector<std::uint64_t> tau_histogram(unsigned d, std::size_t n, std::uint64_t samples, std::uint64_t seed,
                                         unsigned threads) {
  validate_degree(d);
  require(n >= 1, "n must be at least 1");
  constexpr std::size_t kBlock = 1 << 14;
  const std::size_t blocks = (samples + kBlock - 1) / kBlock;
  std::vector<std::vector<std::uint64_t>> partial(blocks, std::vector<std::uint64_t>(n + 1, 0));
  parallel_for(blocks, threads, [&](std::size_t b) {
    Rng rng = make_stream(seed, {tag::walk, b});
    const std::uint64_t end = std::min<std::uint64_t>(samples, (b + 1) * kBlock);
    for (std::uint64_t i = b * kBlock; i < end; ++i) ++partial[b][sample_pair_walk(d, n, rng).tau];
  });
  std::vector<std::uint64_t> counts(n + 1, 0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k <= n; ++k) counts[k] += p[k];
  return counts;
}

}  // namespace cptree::walks
