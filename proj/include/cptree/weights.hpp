#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cptree/rng.hpp"
#include "cptree/tree.hpp"

namespace cptree {

struct WeightAtom {
  double value = 0.0;
  double probability = 0.0;
};

/// Law of the i.i.d. vertex weight rho: finitely many atoms in [0, M].
///
/// Only finitely supported laws are represented; a general bounded law is
/// approximated by discretising it. M is kept separately from the largest
/// atom because the analytic bounds are stated in terms of an a-priori bound
/// that may be loose.
class WeightDistribution {
 public:
  /// Throws ValidationError unless probabilities sum to 1 (within 1e-12),
  /// every atom lies in [0, bound_m], and mu(rho > 0) > 0.
  WeightDistribution(std::vector<WeightAtom> support, double bound_m);

  /// rho == value, with M = value.
  static WeightDistribution constant(double value);
  /// Parses "v:p[,v:p...]". bound_m <= 0 means "use the largest atom".
  static WeightDistribution parse(std::string_view spec, double bound_m = 0.0);

  const std::vector<WeightAtom>& support() const { return support_; }
  std::size_t size() const { return support_.size(); }
  double value(std::size_t j) const { return support_[j].value; }
  double probability(std::size_t j) const { return support_[j].probability; }
  double bound() const { return bound_m_; }

  /// E[rho^k].
  double moment(unsigned k) const;

  /// Index of the atom selected by a uniform u in [0, 1) (inverse CDF).
  std::size_t quantile_index(double u) const;
  double quantile(double u) const { return support_[quantile_index(u)].value; }
  double sample(Rng& rng) const { return quantile(uniform01(rng)); }

  /// Canonical "v:p,..." text with round-trip precision.
  std::string to_string() const;

 private:
  std::vector<WeightAtom> support_;
  std::vector<double> cdf_;
  double bound_m_;
};

/// A fixed realisation omega of the weights on the infinite tree, generated
/// lazily. The weight of v is a pure function of (master_seed, v): a chained
/// hash over the path digits (each step also advances the depth) is mapped to
/// a uniform and pushed through the inverse CDF.
class QuenchedEnvironment {
 public:
  QuenchedEnvironment(std::uint64_t master_seed, WeightDistribution distribution);

  std::uint64_t seed() const { return seed_; }
  const WeightDistribution& distribution() const { return dist_; }

  double weight_of(const VertexId& v) const;

  /// Incremental hashing for callers that walk the tree: the key of the root,
  /// the key of child j given its parent's key, and the weight for a key.
  /// weight_of(v) == weight_for_key(fold of child_key over v's digits).
  std::uint64_t root_key() const { return root_key_; }
  static std::uint64_t child_key(std::uint64_t parent_key, unsigned digit) {
    return combine(parent_key, static_cast<std::uint64_t>(digit) + 1);
  }
  double weight_for_key(std::uint64_t key) const { return dist_.quantile(to_unit(mix64(key))); }
  std::size_t atom_for_key(std::uint64_t key) const { return dist_.quantile_index(to_unit(mix64(key))); }

 private:
  std::uint64_t seed_;
  WeightDistribution dist_;
  std::uint64_t root_key_;
};

}  // namespace cptree
