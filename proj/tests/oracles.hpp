#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls into the library's numerical routines.

#include <boost/math/quadrature/exp_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "cptree/linear_system.hpp"
#include "cptree/weights.hpp"

namespace oracle {

using namespace cptree;

using Dense = std::vector<std::vector<long double>>;

inline Dense multiply(const Dense& a, const Dense& b) {
  const std::size_t n = a.size();
  Dense c(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k)
      if (a[i][k] != 0.0L)
        for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

// exp(A) by scaling and squaring of a 30-term Taylor polynomial.
inline Dense expm(Dense a) {
  const std::size_t n = a.size();
  long double norm = 0.0L;
  for (const auto& row : a) {
    long double s = 0.0L;
    for (long double x : row) s += std::fabs(x);
    norm = std::max(norm, s);
  }
  int squarings = 0;
  while (norm > 0.5L) {
    norm /= 2;
    ++squarings;
  }
  for (auto& row : a)
    for (auto& x : row) x = std::ldexp(x, -squarings);
  Dense result(n, std::vector<long double>(n, 0.0L)), term = result;
  for (std::size_t i = 0; i < n; ++i) result[i][i] = term[i][i] = 1.0L;
  for (int k = 1; k <= 30; ++k) {
    term = multiply(term, a);
    for (auto& row : term)
      for (auto& x : row) x /= k;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) result[i][j] += term[i][j];
  }
  for (int s = 0; s < squarings; ++s) result = multiply(result, result);
  return result;
}

// e^{-t} (e^{tG} 1)(root), with G assembled from the tree directly.
inline double dense_root_mean(const linear::TruncatedEnvironment& env, double lambda, double t) {
  const std::size_t n = env.tree.size();
  Dense g(n, std::vector<long double>(n, 0.0L));
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y : env.tree.neighbors_of(x))
      g[x][y] = static_cast<long double>(t) * lambda * env.weights[x] * env.weights[y];
  const Dense e = expm(g);
  long double s = 0.0L;
  for (long double v : e[0]) s += v;
  return static_cast<double>(std::exp(-static_cast<long double>(t)) * s);
}

// P(U1 < H, U2 < H) with H ~ Exp(1), Ui ~ Exp(lambda c ai), by quadrature.
inline double split_quadrature(double lambda, double c, double a, double b) {
  boost::math::quadrature::exp_sinh<double> integrator;
  const double r1 = lambda * c * a, r2 = lambda * c * b;
  return integrator.integrate(
      [&](double h) { return std::exp(-h) * -std::expm1(-r1 * h) * -std::expm1(-r2 * h); });
}

inline double pass(double lambda, double a, double b) { return lambda * a * b / (1 + lambda * a * b); }

// Calls f(probability, values) for every assignment of atoms to `length` i.i.d. slots.
template <class F>
void for_each_assignment(const WeightDistribution& dist, std::size_t length, F&& f) {
  std::vector<std::size_t> idx(length, 0);
  std::vector<double> values(length);
  while (true) {
    double p = 1.0;
    for (std::size_t i = 0; i < length; ++i) {
      p *= dist.probability(idx[i]);
      values[i] = dist.value(idx[i]);
    }
    f(p, values);
    std::size_t i = 0;
    while (i < length && ++idx[i] == dist.size()) idx[i++] = 0;
    if (i == length) return;
  }
}

// E|L_n| by enumerating the weights along one root-to-depth-n path.
inline double first_moment(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n) {
  double sum = 0.0;
  for_each_assignment(dist, n + 1, [&](double p, const std::vector<double>& w) {
    double prob = p;
    for (std::size_t i = 0; i < n; ++i) prob *= pass(lambda, w[i], w[i + 1]);
    sum += prob;
  });
  return std::pow(double(d), double(n)) * sum;
}

// E|L_n|^2 as a sum over ordered pairs of depth-n vertices, grouped by the
// depth k of their last common ancestor. Each pair's weights (shared prefix
// plus two tails) are enumerated outright; the split at the ancestor uses
// the quadrature kernel.
inline double second_moment(double lambda, unsigned d, const WeightDistribution& dist, std::size_t n) {
  double total = first_moment(lambda, d, dist, n);
  const double dd = d;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t tail = n - k;
    const double pairs = std::pow(dd, double(k)) * dd * (dd - 1) * std::pow(dd, 2.0 * double(tail - 1));
    std::map<std::tuple<double, double, double>, double> split;
    double sum = 0.0;
    for_each_assignment(dist, k + 1 + 2 * tail, [&](double p, const std::vector<double>& w) {
      double prob = p;
      for (std::size_t i = 0; i < k; ++i) prob *= pass(lambda, w[i], w[i + 1]);
      const double* t1 = &w[k + 1];
      const double* t2 = &w[k + 1 + tail];
      const auto key = std::make_tuple(w[k], t1[0], t2[0]);
      auto it = split.find(key);
      if (it == split.end()) it = split.emplace(key, split_quadrature(lambda, w[k], t1[0], t2[0])).first;
      prob *= it->second;
      for (std::size_t i = 0; i + 1 < tail; ++i) prob *= pass(lambda, t1[i], t1[i + 1]) * pass(lambda, t2[i], t2[i + 1]);
      sum += prob;
    });
    total += pairs * sum;
  }
  return total;
}

}  // namespace oracle

namespace oracle {

// Law at time t of the contact process on a truncated tree, from the dense
// generator exponential. States are bitmasks over tree indices.
inline std::vector<double> contact_distribution(const linear::TruncatedEnvironment& env, double lambda,
                                                std::uint32_t initial, double t) {
  const std::size_t n = env.tree.size(), states = std::size_t{1} << n;
  Dense q(states, std::vector<long double>(states, 0.0L));
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t x = 0; x < n; ++x) {
      long double rate;
      if (s >> x & 1) {
        rate = 1.0L;
      } else {
        rate = 0.0L;
        for (std::size_t y : env.tree.neighbors_of(x))
          if (s >> y & 1) rate += static_cast<long double>(lambda) * env.weights[x] * env.weights[y];
      }
      q[s][s ^ (std::size_t{1} << x)] += t * rate;
      q[s][s] -= t * rate;
    }
  const Dense e = expm(q);
  std::vector<double> out(states);
  for (std::size_t s = 0; s < states; ++s) out[s] = static_cast<double>(e[initial][s]);
  return out;
}

}  // namespace oracle
