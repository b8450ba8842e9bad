#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

namespace cptree {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  bool intersects(const Interval& other) const { return lo <= other.hi && other.lo <= hi; }
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials` at critical value z.
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = kZ95);

/// Running mean / variance (Welford).
class MeanAccumulator {
 public:
  void add(double x);
  void merge(const MeanAccumulator& other);

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance; 0 for fewer than two samples.
  double variance() const;
  /// Standard error of the mean.
  double stderr_of_mean() const;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Compensated summation.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

/// Runs body(i) for i in [0, n) on `threads` workers (0 = hardware
/// concurrency). Each index is executed exactly once; callers write results
/// into per-index slots so that merged output does not depend on scheduling.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

/// Block form: body(begin, end) over consecutive ranges of at most `block`
/// indices, so a worker can reuse scratch state across a block.
void parallel_blocks(std::size_t n, std::size_t block, unsigned threads,
                     const std::function<void(std::size_t, std::size_t)>& body);

unsigned default_threads();
void set_default_threads(unsigned threads);

}  // namespace cptree
