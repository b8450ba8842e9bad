#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cptree/rng.hpp"

namespace cptree::walks {

/// Law of |X_n| for the simple random walk on T^d started at the root: from
/// distance 0 the walk always moves out; from k >= 1 it moves out with
/// probability d/(d+1) and in with probability 1/(d+1).
struct DistanceDistribution {
  std::size_t n = 0;
  std::vector<double> pmf;  // pmf[k] = P(|X_n| = k), k = 0..n
};

DistanceDistribution distance_pmf(unsigned d, std::size_t n);

/// E x^{|X_n|} for 0 < x <= 1.
double distance_gen_fn(unsigned d, std::size_t n, double x);
double distance_gen_fn(const DistanceDistribution& dist, double x);
/// [dx/(d+1) + 1/((d+1)x)]^n.
double distance_gen_bound(unsigned d, std::size_t n, double x);

/// P(tau = k) = d^{-k} (1 - 1/d).
double tau_pmf(unsigned d, std::size_t k);
/// E s^tau = (d-1)/(d-s) for 0 < s < d; ValidationError "series diverges" otherwise.
double tau_mgf(unsigned d, double s);
/// sum_{k=0}^{terms-1} s^k d^{-k} (1 - 1/d).
double tau_mgf_partial(unsigned d, double s, std::size_t terms);

struct PairWalk {
  std::vector<std::uint16_t> first;
  std::vector<std::uint16_t> second;
  /// Last index at which both walks sit on the same vertex, capped at n.
  std::size_t tau = 0;
};

/// Two independent child-only walks of n steps from the root.
PairWalk sample_pair_walk(unsigned d, std::size_t n, Rng& rng);

/// Empirical counts of tau ^ n over `samples` pair walks (index k = 0..n).
std::vector<std::uint64_t> tau_histogram(unsigned d, std::size_t n, std::uint64_t samples, std::uint64_t seed,
                                         unsigned threads = 0);

}  // namespace cptree::walks
