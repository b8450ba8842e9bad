#include "cptree/rng.hpp"

#include <cmath>
#include <limits>

namespace cptree {

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t key = mix64(master);
  for (auto t : tags) key = combine(key, t);
  return key;
}

Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(master, tags));
}

double exponential(Rng& rng, double rate) {
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform01(rng)) / rate;
}

}  // namespace cptree
