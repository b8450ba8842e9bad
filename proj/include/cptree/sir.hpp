#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cptree/rng.hpp"
#include "cptree/weights.hpp"

namespace cptree::sir {

/// Edge kernels of the non-backtracking SIR model. A parent x with weight a
/// holds its infection for H ~ Exp(1); child y with weight b is reached iff
/// U ~ Exp(lambda a b) falls below H.
struct EdgeKernels {
  double lambda;

  /// P(U < H) = lambda a b / (1 + lambda a b).
  double pass(double a, double b) const;
  /// P(U1 < H, U2 < H) for two children sharing the parent clock.
  double split_exact(double a, double b, double c) const;
  /// 2 lambda^2 a^2 b c / ((1 + lambda a b)(1 + lambda a c)), an upper bound for split_exact.
  double split_bound(double a, double b, double c) const;
};

double split_kernel_exact(double lambda, double a, double b, double c);

enum class Split { exact, product_bound };

struct GenerationSizes {
  /// sizes[n] = |L_n|, n = 0..n_max.
  std::vector<std::uint64_t> sizes;
};

/// Default guard on a single generation's size.
inline constexpr std::uint64_t kGenerationCap = 10'000'000;

/// Breadth-first realisation of I_infinity down to depth n_max in the
/// environment env. BudgetError if a generation exceeds `generation_cap`.
GenerationSizes simulate_sir(const QuenchedEnvironment& env, unsigned d, double lambda, std::size_t n_max, Rng& rng,
                             std::uint64_t generation_cap = kGenerationCap);

struct MomentEstimate {
  std::vector<double> first;         // mean |L_n|
  std::vector<double> first_se;      // its standard error
  std::vector<double> second;        // mean |L_n|^2
  std::vector<double> second_se;
  std::uint64_t runs = 0;
};

/// Annealed Monte Carlo moments: run i uses a fresh environment derived from
/// (seed, i). Output does not depend on the thread count.
MomentEstimate simulate_moments(unsigned d, const WeightDistribution& dist, double lambda, std::size_t n_max,
                                std::uint64_t runs, std::uint64_t seed, unsigned threads = 0);

/// Natural logarithms of the exact annealed moments of |L_n|.
struct LogMoments {
  double log_first;
  double log_second;
};

/// E|L_n| = d^n E prod_{i<n} h(rho_i, rho_{i+1}) via the transfer recursion
/// f_0 = 1, f_{i+1}(j) = sum_k p_k h(v_j, v_k) f_i(k).
double first_moment_exact(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n);

/// E|L_n|^2 summed over the branch depth k of each ordered pair of depth-n
/// vertices: the diagonal gives E|L_n|; branch depth k < n contributes
/// d^{2n-k-1}(d-1) sum_j pi_k(j) sum_{a,b} p_a p_b q(v_j; v_a, v_b) f(a) f(b),
/// where pi_k carries the shared prefix and f = f_{n-k-1} the two tails.
double second_moment_exact(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n,
                           Split split = Split::exact);

/// Both moments for n = 0..n_max, in log space.
std::vector<LogMoments> log_moments(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n_max,
                                    Split split = Split::exact);

struct RatioRow {
  std::size_t n;
  double first_moment;
  double second_moment_exact;
  double second_moment_bound;
  /// (E|L_n|)^2 / E|L_n|^2 with the exact split kernel.
  double ratio;
};

struct RatioSequence {
  std::vector<RatioRow> rows;
  /// True if the sequence stopped early because E|L_n| underflowed to 0.
  bool truncated = false;
  /// (1 + lambda M^2)^2 / (lambda E rho^2) < d.
  bool condition_holds = false;
  double condition_value = 0.0;
  /// 2 M^2 (1 + lambda M^2)^2 / E rho^2.
  double c_lambda_m = 0.0;
  double min_ratio() const;
};

RatioSequence survival_lower_bound_sequence(double lambda, unsigned d, const WeightDistribution& dist,
                                            std::size_t n_max);

}  // namespace cptree::sir
