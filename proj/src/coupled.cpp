#include "cptree/coupled.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "cptree/bounds.hpp"
#include "cptree/error.hpp"

namespace cptree {

GraphicalContact::GraphicalContact(unsigned d, std::vector<double> lambdas, std::optional<std::size_t> sir_level,
                                   std::optional<unsigned> truncation)
    : d_(d), lambdas_(std::move(lambdas)), sir_level_(sir_level), tree_(d, truncation) {
  require(!lambdas_.empty() && lambdas_.size() <= 63, "coupled run needs between 1 and 63 rates");
  for (std::size_t k = 0; k < lambdas_.size(); ++k) {
    require(std::isfinite(lambdas_[k]) && lambdas_[k] >= 0.0, "rates must be nonnegative reals");
    if (k) require(lambdas_[k] > lambdas_[k - 1], "coupled rates must be strictly increasing");
  }
  if (sir_level_) require(*sir_level_ < lambdas_.size(), "SIR level out of range");
}

void GraphicalContact::grow() {
  if (mask_.size() < tree_.size()) {
    mask_.resize(tree_.size(), 0);
    sir_.resize(tree_.size(), kSusceptible);
    active_slot_.resize(tree_.size(), LazyTree::kNone);
  }
}

void GraphicalContact::activate(Index n) {
  if (active_slot_[n] != LazyTree::kNone) return;
  active_slot_[n] = static_cast<Index>(active_.size());
  active_.push_back(n);
}

void GraphicalContact::deactivate_if_idle(Index n) {
  if (active_slot_[n] == LazyTree::kNone || mask_[n] != 0 || sir_[n] == kInfected) return;
  const Index slot = active_slot_[n];
  const Index moved = active_.back();
  active_[slot] = moved;
  active_slot_[moved] = slot;
  active_.pop_back();
  active_slot_[n] = LazyTree::kNone;
}

bool GraphicalContact::upward_closed(Mask m) const {
  m &= live_;
  if (m == 0) return true;
  const Mask low = m & (~m + 1);
  return (live_ & ~(low - 1)) == m;
}

double GraphicalContact::site_rate(Index y, std::size_t level) const {
  const Mask bit = Mask{1} << level;
  double pressure = 0.0;
  tree_.for_each_neighbor(y, [&](Index z) {
    if (z < mask_.size() && (mask_[z] & bit)) pressure += tree_.weight(z);
  });
  return lambdas_[level] * tree_.weight(y) * pressure;
}

void GraphicalContact::set_mask(Index n, Mask next) {
  const Mask prev = mask_[n];
  mask_[n] = next;
  for (Mask gone = prev & ~next; gone; gone &= gone - 1) {
    const auto k = static_cast<std::size_t>(std::countr_zero(gone));
    if (--count_[k] == 0 && (live_ >> k & 1)) finish_level(k, std::nullopt);
  }
  for (Mask added = next & ~prev; added; added &= added - 1) {
    const auto k = static_cast<std::size_t>(std::countr_zero(added));
    ++count_[k];
    summary_[k].max_size = std::max(summary_[k].max_size, count_[k]);
  }
}

void GraphicalContact::refresh_top() {
  top_ = 0.0;
  for (Mask m = live_; m; m &= m - 1) top_ = std::max(top_, lambdas_[static_cast<std::size_t>(std::countr_zero(m))]);
}

void GraphicalContact::finish_level(std::size_t k, std::optional<Censor> reason) {
  const Mask bit = Mask{1} << k;
  live_ &= ~bit;
  TrajectorySummary& s = summary_[k];
  s.end_time = time_;
  if (reason) {
    s.censored = *reason;
    // A censored level no longer evolves; drop it from every vertex.
    for (std::size_t i = 0; i < active_.size();) {
      const Index n = active_[i];
      mask_[n] &= ~bit;
      deactivate_if_idle(n);
      if (i < active_.size() && active_[i] == n) ++i;
    }
    count_[k] = 0;
  } else {
    s.extinction_time = time_;
    if (limits_)
      for (double t : limits_->checkpoints)
        if (t >= time_) s.checkpoint_sizes.emplace_back(t, 0);
  }
  refresh_top();
}

std::vector<TrajectorySummary> GraphicalContact::run(const QuenchedEnvironment& env, const RunLimits& limits, Rng& rng,
                                                     CouplingDiagnostics* diagnostics) {
  validate(limits);
  limits_ = &limits;
  tree_.reset(env);
  bound_sq_ = env.distribution().bound() * env.distribution().bound();
  mask_.clear();
  sir_.clear();
  active_slot_.clear();
  active_.clear();
  grow();
  const std::size_t levels = lambdas_.size();
  count_.assign(levels, 0);
  summary_.assign(levels, TrajectorySummary{});
  diag_ = CouplingDiagnostics{};
  time_ = 0.0;
  live_ = (levels == 64 ? ~Mask{0} : (Mask{1} << levels) - 1);
  refresh_top();
  std::vector<double> rate_sup(levels);
  for (std::size_t k = 0; k < levels; ++k) rate_sup[k] = bounds::rate_sup(lambdas_[k], d_, env.distribution().bound());

  tree_.ensure_children(0);
  grow();
  set_mask(0, live_);
  if (sir_level_) sir_[0] = kInfected;
  activate(0);

  std::size_t next_checkpoint = 0;
  auto record_checkpoint = [&](double t) {
    for (Mask m = live_; m; m &= m - 1) {
      const auto k = static_cast<std::size_t>(std::countr_zero(m));
      summary_[k].checkpoint_sizes.emplace_back(t, count_[k]);
    }
  };

  while (live_ != 0) {
    const double per_vertex = 1.0 + static_cast<double>(d_ + 1) * top_ * bound_sq_;
    const double total = static_cast<double>(active_.size()) * per_vertex;
    const double dt = exponential(rng, total);
    const double next_stop =
        next_checkpoint < limits.checkpoints.size() ? limits.checkpoints[next_checkpoint] : limits.t_max;
    if (time_ + dt > next_stop) {
      time_ = next_stop;
      if (next_checkpoint < limits.checkpoints.size()) {
        record_checkpoint(next_stop);
        ++next_checkpoint;
        continue;
      }
      break;
    }
    time_ += dt;
    ++diag_.events;

    const auto pick = std::min<std::size_t>(active_.size() - 1,
                                            static_cast<std::size_t>(uniform01(rng) * static_cast<double>(active_.size())));
    const Index x = active_[pick];
    if (uniform01(rng) * per_vertex < 1.0) {
      // Recovery mark at x.
      if (sir_[x] == kInfected) sir_[x] = kRemoved;
      set_mask(x, 0);
      deactivate_if_idle(x);
      continue;
    }
    const auto slot = std::min<unsigned>(d_, static_cast<unsigned>(uniform01(rng) * static_cast<double>(d_ + 1)));
    Index y;
    if (slot == d_) {
      y = tree_.node(x).parent;
      if (y == LazyTree::kNone) continue;
    } else {
      const Index first = tree_.first_child(x);
      if (first == LazyTree::kNone) continue;  // truncation boundary
      y = first + slot;
    }
    const double strength = uniform01(rng) * top_ * bound_sq_;
    const double product = tree_.weight(x) * tree_.weight(y);
    Mask valid = 0;
    for (Mask m = live_; m; m &= m - 1) {
      const auto k = static_cast<std::size_t>(std::countr_zero(m));
      if (lambdas_[k] * product > strength) valid |= Mask{1} << k;
    }
    const Mask healthy_live = live_ & ~mask_[y];
    if (healthy_live) {
      const auto k = static_cast<std::size_t>(63 - std::countl_zero(healthy_live));
      if (site_rate(y, k) > rate_sup[k] * (1.0 + 1e-9)) ++diag_.rate_bound_violations;
    }
    const Mask added = mask_[x] & valid & ~mask_[y];
    const bool sir_hit = sir_level_ && (live_ >> *sir_level_ & 1) && sir_[x] == kInfected && sir_[y] == kSusceptible &&
                         tree_.node(y).parent == x && lambdas_[*sir_level_] * product > strength;
    if (!added && !sir_hit) continue;

    tree_.ensure_children(y);
    grow();
    if (added) {
      set_mask(y, mask_[y] | added);
      if (!upward_closed(mask_[y])) ++diag_.inclusion_violations;
    }
    if (sir_hit) {
      sir_[y] = kInfected;
      ++diag_.sir_infections;
      if (!(mask_[y] & (Mask{1} << *sir_level_))) ++diag_.domination_violations;
    }
    activate(y);
    for (Mask m = added & live_; m; m &= m - 1) {
      const auto k = static_cast<std::size_t>(std::countr_zero(m));
      if (tree_.node(y).depth >= limits.depth_cap)
        finish_level(k, Censor::depth_cap);
      else if (count_[k] >= limits.size_cap)
        finish_level(k, Censor::size_cap);
    }
  }
  for (Mask m = live_; m; m &= m - 1) {
    const auto k = static_cast<std::size_t>(std::countr_zero(m));
    summary_[k].censored = Censor::time_horizon;
    summary_[k].end_time = time_;
  }
  for (auto& s : summary_) {
    s.events = diag_.events;
    s.rate_bound_violations = diag_.rate_bound_violations;
  }
  if (diagnostics) {
    diagnostics->inclusion_violations += diag_.inclusion_violations;
    diagnostics->domination_violations += diag_.domination_violations;
    diagnostics->sir_infections += diag_.sir_infections;
    diagnostics->rate_bound_violations += diag_.rate_bound_violations;
    diagnostics->events += diag_.events;
  }
  limits_ = nullptr;
  return summary_;
}

std::pair<TrajectorySummary, TrajectorySummary> run_coupled(const QuenchedEnvironment& env, unsigned d,
                                                            double lambda_low, double lambda_high,
                                                            const RunLimits& limits, Rng& rng,
                                                            CouplingDiagnostics* diagnostics) {
  require(lambda_low > 0.0 && lambda_low < lambda_high, "coupled run needs 0 < lambda_low < lambda_high");
  GraphicalContact engine(d, {lambda_low, lambda_high});
  auto out = engine.run(env, limits, rng, diagnostics);
  return {out[0], out[1]};
}

}  // namespace cptree
