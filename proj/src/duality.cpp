#include "cptree/duality.hpp"

#include <algorithm>
#include <cmath>

#include "cptree/error.hpp"
#include "cptree/stats.hpp"

namespace cptree::duality {

FiniteCTMC::FiniteCTMC(const linear::TruncatedEnvironment& env, double lambda)
    : n_(env.tree.size()), lambda_(lambda), weights_(env.weights) {
  require(n_ <= kMaxVertices, "duality checks need at most 14 vertices");
  require(lambda >= 0.0, "lambda must be nonnegative");
  neighbors_.reserve(n_);
  for (std::size_t x = 0; x < n_; ++x) neighbors_.push_back(env.tree.neighbors_of(x));
  for (State eta = 0; eta < states(); ++eta) max_exit_ = std::max(max_exit_, exit_rate(eta));
}

double FiniteCTMC::flip_rate(State eta, std::size_t x) const {
  if (eta >> x & 1) return 1.0;
  double pressure = 0.0;
  for (std::size_t y : neighbors_[x])
    if (eta >> y & 1) pressure += weights_[y];
  return lambda_ * weights_[x] * pressure;
}

double FiniteCTMC::exit_rate(State eta) const {
  double total = 0.0;
  for (std::size_t x = 0; x < n_; ++x) total += flip_rate(eta, x);
  return total;
}

double FiniteCTMC::max_row_sum_error() const {
  // Diagonal from the closed-form exit rate, off-diagonals entry by entry.
  double worst = 0.0;
  for (State eta = 0; eta < states(); ++eta) {
    KahanSum row;
    row.add(-exit_rate(eta));
    for (std::size_t x = 0; x < n_; ++x) {
      double entry = 0.0;
      if (eta >> x & 1) {
        entry = 1.0;
      } else {
        for (std::size_t y : neighbors_[x])
          if (eta >> y & 1) entry += lambda_ * weights_[x] * weights_[y];
      }
      row.add(entry);
    }
    worst = std::max(worst, std::abs(row.value()));
  }
  return worst;
}

bool FiniteCTMC::offdiagonal_nonnegative() const {
  for (State eta = 0; eta < states(); ++eta)
    for (std::size_t x = 0; x < n_; ++x)
      if (flip_rate(eta, x) < 0.0) return false;
  return true;
}

std::vector<double> FiniteCTMC::exact_distribution(State initial, double t) const {
  require(initial < states(), "initial state outside the state space");
  require(t >= 0.0 && std::isfinite(t), "t must be a nonnegative real");
  const std::size_t s = states();
  std::vector<double> dist(s, 0.0);
  dist[initial] = 1.0;
  const double rate = max_exit_;
  if (t == 0.0 || rate == 0.0) return dist;

  // Split [0, t] so that each piece has rate * dt <= 32; per-piece l1 error
  // is at most the Poisson tail, kept below 1e-12 / pieces.
  const std::size_t pieces = static_cast<std::size_t>(std::ceil(rate * t / 32.0));
  const double dt = t / static_cast<double>(pieces);
  const double mean = rate * dt;
  const double tolerance = 1e-12 / static_cast<double>(pieces);
  const double log_mean = std::log(mean);

  std::vector<double> power(s), next(s), acc(s);
  std::vector<double> stay(s);
  for (State eta = 0; eta < s; ++eta) stay[eta] = 1.0 - exit_rate(eta) / rate;

  for (std::size_t piece = 0; piece < pieces; ++piece) {
    power = dist;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0;; ++k) {
      const double w = std::exp(-mean + k * log_mean - std::lgamma(k + 1.0));
      for (State eta = 0; eta < s; ++eta) acc[eta] += w * power[eta];
      const double ratio = mean / (k + 2.0);
      if (ratio < 1.0) {
        const double tail = std::exp(-mean + (k + 1) * log_mean - std::lgamma(k + 2.0)) / (1.0 - ratio);
        if (tail <= tolerance) break;
      }
      // next = power * P with P = I + Q / rate.
      for (State eta = 0; eta < s; ++eta) next[eta] = power[eta] * stay[eta];
      for (State eta = 0; eta < s; ++eta) {
        const double mass = power[eta];
        if (mass == 0.0) continue;
        for (std::size_t x = 0; x < n_; ++x) {
          const double r = flip_rate(eta, x);
          if (r > 0.0) next[eta ^ (State{1} << x)] += mass * r / rate;
        }
      }
      std::swap(power, next);
    }
    dist = acc;
  }
  return dist;
}

double SelfDuality::discrepancy() const { return std::abs(survival - root_infected); }
double DualityRelation::discrepancy() const { return std::abs(forward - dual); }

SelfDuality self_duality(const linear::TruncatedEnvironment& env, double lambda, double t) {
  const FiniteCTMC chain(env, lambda);
  const auto from_root = chain.exact_distribution(1, t);
  const auto from_all = chain.exact_distribution(static_cast<FiniteCTMC::State>(chain.states() - 1), t);
  KahanSum alive, root;
  for (FiniteCTMC::State eta = 1; eta < chain.states(); ++eta) {
    alive.add(from_root[eta]);
    if (eta & 1) root.add(from_all[eta]);
  }
  return {alive.value(), root.value()};
}

double check_self_duality(const linear::TruncatedEnvironment& env, double lambda, double t) {
  return self_duality(env, lambda, t).discrepancy();
}

DualityRelation duality_relation(const linear::TruncatedEnvironment& env, double lambda, double t,
                                 FiniteCTMC::State eta, FiniteCTMC::State a) {
  const FiniteCTMC chain(env, lambda);
  require(eta < chain.states() && a < chain.states(), "state outside the truncation");
  const auto forward = chain.exact_distribution(eta, t);
  // The dual set process is the contact process itself started from A.
  const auto dual = chain.exact_distribution(a, t);
  KahanSum lhs, rhs;
  for (FiniteCTMC::State s = 0; s < chain.states(); ++s) {
    lhs.add(forward[s] * dual_h(s, a));
    rhs.add(dual[s] * dual_h(eta, s));
  }
  return {lhs.value(), rhs.value()};
}

double check_duality_relation(const linear::TruncatedEnvironment& env, double lambda, double t,
                              FiniteCTMC::State eta, FiniteCTMC::State a) {
  return duality_relation(env, lambda, t, eta, a).discrepancy();
}

SelfDuality annealed_self_duality(unsigned d, unsigned depth, const WeightDistribution& dist, double lambda,
                                  double t, const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty(), "need at least one environment seed");
  KahanSum alive, root;
  for (auto seed : seeds) {
    const auto env = linear::truncate(QuenchedEnvironment(seed, dist), d, depth);
    const auto sd = self_duality(env, lambda, t);
    alive.add(sd.survival);
    root.add(sd.root_infected);
  }
  const double n = static_cast<double>(seeds.size());
  return {alive.value() / n, root.value() / n};
}

}  // namespace cptree::duality
