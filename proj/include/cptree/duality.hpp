#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cptree/linear_system.hpp"

namespace cptree::duality {

/// Largest vertex set handled exactly (2^14 states).
inline constexpr std::size_t kMaxVertices = 14;

/// The contact process on a truncated tree as a finite CTMC over {0,1}^V.
/// A state is a bitmask with bit i set iff tree vertex i is infected.
class FiniteCTMC {
 public:
  using State = std::uint32_t;

  FiniteCTMC(const linear::TruncatedEnvironment& env, double lambda);

  std::size_t vertices() const { return n_; }
  std::size_t states() const { return std::size_t{1} << n_; }
  /// c(x, eta): 1 if x is infected, lambda rho(x) sum_{y~x} rho(y) eta(y) otherwise.
  double flip_rate(State eta, std::size_t x) const;
  double exit_rate(State eta) const;
  double max_exit_rate() const { return max_exit_; }
  /// Largest |row sum| of the generator and whether all off-diagonal entries are >= 0.
  double max_row_sum_error() const;
  bool offdiagonal_nonnegative() const;

  /// Law of eta_t from `initial`, by uniformisation with total truncation
  /// error below 1e-12 in l1.
  std::vector<double> exact_distribution(State initial, double t) const;

 private:
  std::size_t n_;
  double lambda_;
  std::vector<double> weights_;
  std::vector<std::vector<std::size_t>> neighbors_;
  double max_exit_ = 0.0;
};

/// prod_{x in A} (1 - eta(x)).
inline double dual_h(FiniteCTMC::State eta, FiniteCTMC::State a) { return (eta & a) == 0 ? 1.0 : 0.0; }

struct SelfDuality {
  double survival;      // P(C_t != empty) from C_0 = {O}
  double root_infected; // P(eta_t(O) = 1) from eta_0 = 1
  double discrepancy() const;
};

SelfDuality self_duality(const linear::TruncatedEnvironment& env, double lambda, double t);
double check_self_duality(const linear::TruncatedEnvironment& env, double lambda, double t);

struct DualityRelation {
  double forward; // E_eta H(eta_t, A)
  double dual;    // E_A H(eta, A_t)
  double discrepancy() const;
};

DualityRelation duality_relation(const linear::TruncatedEnvironment& env, double lambda, double t,
                                 FiniteCTMC::State eta, FiniteCTMC::State a);
double check_duality_relation(const linear::TruncatedEnvironment& env, double lambda, double t,
                              FiniteCTMC::State eta, FiniteCTMC::State a);

/// Both sides of the self-duality identity averaged over the environments
/// with the given seeds.
SelfDuality annealed_self_duality(unsigned d, unsigned depth, const WeightDistribution& dist, double lambda,
                                  double t, const std::vector<std::uint64_t>& seeds);

}  // namespace cptree::duality
