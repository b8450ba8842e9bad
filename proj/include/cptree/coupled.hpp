#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "cptree/contact.hpp"
#include "cptree/lazy_tree.hpp"

namespace cptree {

struct CouplingDiagnostics {
  /// Events after which some vertex was infected at a lower rate but not at
  /// a higher one (C_t(low) not contained in C_t(high)).
  std::uint64_t inclusion_violations = 0;
  /// SIR infections of a vertex not infected in the matched contact process.
  std::uint64_t domination_violations = 0;
  std::uint64_t sir_infections = 0;
  std::uint64_t rate_bound_violations = 0;
  std::uint64_t events = 0;
};

/// Contact processes at several infection rates (and optionally the
/// non-backtracking SIR process) built from one graphical representation.
///
/// Every vertex carries recovery marks at rate 1. Every directed edge x->y
/// carries arrows at rate lambda_top M^2, each with a uniform U; the arrow is
/// used by the process at rate lambda iff U lambda_top M^2 < lambda rho(x)rho(y).
/// Process membership is a bitmask per vertex, one bit per rate, so the
/// inclusion C_t(lambda_i) within C_t(lambda_j) for i < j is checked rather than
/// assumed. lambda_top is the largest rate still running.
class GraphicalContact {
 public:
  /// lambdas strictly increasing, at most 63 entries. sir_level, when set,
  /// runs the SIR process at lambdas[*sir_level] on the same marks.
  GraphicalContact(unsigned d, std::vector<double> lambdas, std::optional<std::size_t> sir_level = std::nullopt,
                   std::optional<unsigned> truncation = std::nullopt);

  /// All processes start from {O}; returns one summary per rate. Counters
  /// are added into *diagnostics.
  std::vector<TrajectorySummary> run(const QuenchedEnvironment& env, const RunLimits& limits, Rng& rng,
                                     CouplingDiagnostics* diagnostics = nullptr);

 private:
  using Index = LazyTree::Index;
  using Mask = std::uint64_t;
  enum : std::uint8_t { kSusceptible = 0, kInfected = 1, kRemoved = 2 };

  void grow();
  void activate(Index n);
  void deactivate_if_idle(Index n);
  void set_mask(Index n, Mask next);
  void finish_level(std::size_t k, std::optional<Censor> reason);
  void refresh_top();
  bool upward_closed(Mask m) const;
  double site_rate(Index y, std::size_t level) const;

  unsigned d_;
  std::vector<double> lambdas_;
  std::optional<std::size_t> sir_level_;
  LazyTree tree_;
  double bound_sq_ = 1.0;

  std::vector<Mask> mask_;
  std::vector<std::uint8_t> sir_;
  std::vector<Index> active_slot_;
  std::vector<Index> active_;
  std::vector<std::size_t> count_;
  Mask live_ = 0;
  double top_ = 0.0;
  double time_ = 0.0;
  std::vector<TrajectorySummary> summary_;
  CouplingDiagnostics diag_;
  const RunLimits* limits_ = nullptr;
};

/// Two contact processes at lambda_low < lambda_high from shared randomness.
std::pair<TrajectorySummary, TrajectorySummary> run_coupled(const QuenchedEnvironment& env, unsigned d,
                                                            double lambda_low, double lambda_high,
                                                            const RunLimits& limits, Rng& rng,
                                                            CouplingDiagnostics* diagnostics = nullptr);

}  // namespace cptree
