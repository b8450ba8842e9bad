#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cptree/tree.hpp"
#include "cptree/weights.hpp"

namespace cptree::linear {

/// Weights of a quenched environment restricted to a TruncatedTree,
/// indexed like the tree.
struct TruncatedEnvironment {
  TruncatedTree tree;
  std::vector<double> weights;
  double bound_m;
};

TruncatedEnvironment truncate(const QuenchedEnvironment& env, unsigned d, unsigned depth);

/// G(x, y) = lambda rho(x) rho(y) for neighbours x ~ y inside the truncation.
class WeightedAdjacency {
 public:
  WeightedAdjacency(const TruncatedEnvironment& env, double lambda);

  std::size_t size() const { return offsets_.size() - 1; }
  double entry(std::size_t x, std::size_t y) const;
  /// out = G v
  void apply(const std::vector<double>& v, std::vector<double>& out) const;
  double max_row_sum() const { return max_row_sum_; }
  double max_entry() const { return max_entry_; }
  bool symmetric() const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> columns_;
  std::vector<double> values_;
  double max_row_sum_ = 0.0;
  double max_entry_ = 0.0;
};

/// Vertex limit for the exact mean computation.
inline constexpr std::size_t kMaxExactVertices = 20'000;

struct XiMean {
  /// E xi_t(x) for every vertex, tree index order.
  std::vector<double> mean;
  /// Rigorous bound on the dropped tail of the series (absolute, per entry).
  double tail_bound = 0.0;
  std::size_t terms = 0;
};

/// e^{-t} e^{tG} 1 by uniformisation: with c = max row sum of G,
/// e^{-t} sum_n (ct)^n/n! (G/c)^n 1, every (G/c)^n 1 in [0, 1]. The series is
/// cut once the tail e^{-t} sum_{n>N} (ct)^n/n! is below 1e-9; BudgetError
/// if that takes more than 10^4 terms.
XiMean mean_xi_exact(const TruncatedEnvironment& env, double lambda, double t);

struct XiSample {
  double mean = 0.0;
  double std_error = 0.0;
  /// Fraction of replicas with xi_t(O) >= 1.
  double alive_fraction = 0.0;
  std::uint64_t alive = 0;
  std::uint64_t replicas = 0;
};

/// Exact-in-law simulation of xi_t on the truncation from xi_0 = 1: each
/// vertex resets to 0 at rate 1; for each ordered neighbour pair (x, y),
/// xi(x) <- xi(x) + xi(y) at rate lambda rho(x) rho(y). Overflow of a 64-bit
/// value raises BudgetError.
XiSample simulate_xi(const TruncatedEnvironment& env, double lambda, double t, std::uint64_t replicas,
                     std::uint64_t seed, unsigned threads = 0);

/// (E rho~^2)^{-1} exp{t [lambda M^2 (d E rho~^2 + 1/E rho~^2) - 1]}, rho~ = rho/M.
double annealed_mean_upper_bound(double lambda, unsigned d, const WeightDistribution& dist, double t);

}  // namespace cptree::linear
