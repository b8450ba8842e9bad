#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cptree/error.hpp"
#include "cptree/rng.hpp"
#include "cptree/stats.hpp"
#include "cptree/tree.hpp"
#include "cptree/weights.hpp"

using namespace cptree;

namespace {

double chi_square_critical(std::size_t dof, double level) {
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(dof)), level);
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("wilson interval edges and known value") {
    const auto none = wilson_interval(0, 100);
    CHECK(none.lo == 0.0);
    CHECK(none.hi == doctest::Approx(0.036994).epsilon(1e-4));
    const auto all = wilson_interval(100, 100);
    CHECK(all.hi == 1.0);
    CHECK(all.lo == doctest::Approx(1.0 - 0.036994).epsilon(1e-4));
    // 50/100 at z = 1.96: 0.5 -+ 0.0962
    const auto half = wilson_interval(50, 100);
    CHECK(half.lo == doctest::Approx(0.40383).epsilon(1e-4));
    CHECK(half.hi == doctest::Approx(0.59617).epsilon(1e-4));
  }

  TEST_CASE("welford matches two-pass and merges") {
    std::vector<double> xs{1.5, 2.0, -3.0, 7.25, 0.0, 4.0};
    MeanAccumulator a, b, all;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      (i < 2 ? a : b).add(xs[i]);
      all.add(xs[i]);
    }
    a.merge(b);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size() - 1;
    CHECK(all.mean() == doctest::Approx(mean));
    CHECK(all.variance() == doctest::Approx(var));
    CHECK(a.mean() == doctest::Approx(mean));
    CHECK(a.variance() == doctest::Approx(var));
    CHECK(a.count() == xs.size());
  }

  TEST_CASE("parallel_for visits each index once for any thread count") {
    for (unsigned threads : {1u, 2u, 5u}) {
      std::vector<int> hits(1000, 0);
      parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i] += 1; });
      for (int h : hits) REQUIRE(h == 1);
    }
  }

  TEST_CASE("parallel_blocks propagates exceptions") {
    CHECK_THROWS_AS(parallel_blocks(100, 10, 2,
                                    [](std::size_t b, std::size_t) {
                                      if (b == 50) throw BudgetError("boom");
                                    }),
                    BudgetError);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("streams are reproducible and distinct") {
    Rng a = make_stream(42, {tag::replica, 3});
    Rng b = make_stream(42, {tag::replica, 3});
    Rng c = make_stream(42, {tag::replica, 4});
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  }

  TEST_CASE("to_unit stays in [0,1)") {
    CHECK(to_unit(0) == 0.0);
    CHECK(to_unit(~std::uint64_t{0}) < 1.0);
  }

  TEST_CASE("exponential mean and zero rate") {
    Rng rng = make_stream(9, {1});
    CHECK(std::isinf(exponential(rng, 0.0)));
    MeanAccumulator m;
    for (int i = 0; i < 200000; ++i) m.add(exponential(rng, 2.0));
    CHECK(std::abs(m.mean() - 0.5) < 4 * m.stderr_of_mean());
  }
}

TEST_SUITE("weights") {
  TEST_CASE("validation") {
    CHECK_THROWS_AS(WeightDistribution({{1.0, 0.5}}, 1.0), ValidationError);
    CHECK_THROWS_AS(WeightDistribution({{2.0, 1.0}}, 1.0), ValidationError);
    CHECK_THROWS_AS(WeightDistribution({{-1.0, 1.0}}, 1.0), ValidationError);
    CHECK_THROWS_AS(WeightDistribution({{0.0, 1.0}}, 1.0), ValidationError);
    CHECK_THROWS_AS(WeightDistribution({{1.0, 1.0}}, 0.0), ValidationError);
    CHECK_NOTHROW(WeightDistribution({{0.0, 0.5}, {1.0, 0.5}}, 1.0));
    // Within 1e-12 of 1 is accepted.
    CHECK_NOTHROW(WeightDistribution({{1.0, 0.5 + 4e-13}, {0.5, 0.5}}, 1.0));
    CHECK_THROWS_AS(WeightDistribution({{1.0, 0.5 + 1e-10}, {0.5, 0.5}}, 1.0), ValidationError);
    try {
      WeightDistribution({{0.0, 1.0}}, 1.0);
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("mu(rho>0)>0") != std::string::npos);
    }
  }

  TEST_CASE("parse and round trip") {
    const auto d = WeightDistribution::parse("0.5:0.3,2:0.7");
    CHECK(d.size() == 2);
    CHECK(d.bound() == 2.0);
    const auto again = WeightDistribution::parse(d.to_string(), d.bound());
    CHECK(again.to_string() == d.to_string());
    CHECK(WeightDistribution::parse("1:1", 3.0).bound() == 3.0);
    CHECK_THROWS_AS(WeightDistribution::parse("1;1"), ValidationError);
    CHECK_THROWS_AS(WeightDistribution::parse("a:1"), ValidationError);
    CHECK_THROWS_AS(WeightDistribution::parse("0:1"), ValidationError);
    CHECK_THROWS_AS(WeightDistribution::parse(""), ValidationError);
  }

  TEST_CASE("moments") {
    CHECK(WeightDistribution::constant(1.0).moment(2) == 1.0);
    CHECK(WeightDistribution::parse("0:0.5,1:0.5").moment(2) == 0.5);
    const auto d = WeightDistribution::parse("0.5:0.3,2:0.7");
    CHECK(d.moment(2) == doctest::Approx(2.875).epsilon(1e-14));
    CHECK(d.moment(1) == doctest::Approx(1.55).epsilon(1e-14));
    // Jensen and the bound.
    CHECK(d.moment(1) * d.moment(1) <= d.moment(2));
    CHECK(d.moment(2) <= d.bound() * d.bound());
  }

  TEST_CASE("monte carlo second moment agrees with the exact value") {
    const auto d = WeightDistribution::parse("0.5:0.3,2:0.7");
    Rng rng = make_stream(5, {1});
    MeanAccumulator m;
    for (int i = 0; i < 10'000'000; ++i) {
      const double x = d.sample(rng);
      m.add(x * x);
    }
    CHECK(std::abs(m.mean() - 2.875) < 3 * m.stderr_of_mean());
  }

  TEST_CASE("sampling frequencies") {
    const auto d = WeightDistribution::parse("0:0.5,1:0.5");
    Rng rng = make_stream(6, {1});
    int ones = 0;
    for (int i = 0; i < 1'000'000; ++i) {
      const double x = d.sample(rng);
      REQUIRE((x == 0.0 || x == 1.0));
      ones += x == 1.0;
    }
    CHECK(std::abs(ones / 1e6 - 0.5) < 0.002);
    Rng r2 = make_stream(6, {2});
    for (int i = 0; i < 1000; ++i) REQUIRE(WeightDistribution::constant(1.0).sample(r2) == 1.0);
  }

  TEST_CASE("zero-probability atoms are never drawn") {
    const WeightDistribution d({{0.25, 0.0}, {1.0, 1.0}}, 1.0);
    for (int i = 0; i < 64; ++i) CHECK(d.quantile(i / 64.0) == 1.0);
  }

  TEST_CASE("quenched environment is deterministic and has the right marginal") {
    const auto dist = WeightDistribution::parse("0.25:0.2,0.5:0.3,1:0.5");
    const QuenchedEnvironment env(77, dist);
    const QuenchedEnvironment same(77, dist);
    const QuenchedEnvironment other(78, dist);
    const VertexId v = VertexId::parse("0.1.1");
    CHECK(env.weight_of(v) == same.weight_of(v));
    CHECK(env.weight_of(v) == env.weight_of(v));

    // Walk the first vertices breadth first on T^3 and histogram them.
    std::map<double, int> counts;
    std::vector<VertexId> frontier{VertexId::root()};
    int seen = 0, differ = 0;
    while (seen < 100'000) {
      std::vector<VertexId> next;
      for (const auto& u : frontier) {
        if (seen >= 100'000) break;
        counts[env.weight_of(u)]++;
        differ += env.weight_of(u) != other.weight_of(u);
        ++seen;
        for (const auto& c : children(u, 3)) next.push_back(c);
      }
      frontier = std::move(next);
    }
    double stat = 0.0;
    for (const auto& a : dist.support()) {
      const double expected = a.probability * seen;
      stat += (counts[a.value] - expected) * (counts[a.value] - expected) / expected;
    }
    CHECK(stat < chi_square_critical(dist.size() - 1, 0.999));
    CHECK(differ > seen / 3);

    for (const auto& c : children(VertexId::root(), 5))
      CHECK(QuenchedEnvironment(1, WeightDistribution::constant(0.7)).weight_of(c) == 0.7);
  }

  TEST_CASE("incremental keys agree with weight_of") {
    const auto dist = WeightDistribution::parse("0.1:0.5,0.9:0.5");
    const QuenchedEnvironment env(3, dist);
    std::uint64_t key = env.root_key();
    VertexId v;
    for (unsigned digit : {2u, 0u, 1u, 1u, 3u}) {
      key = QuenchedEnvironment::child_key(key, digit);
      v = v.child(static_cast<VertexId::Digit>(digit));
      CHECK(env.weight_for_key(key) == env.weight_of(v));
    }
  }
}

TEST_SUITE("tree") {
  TEST_CASE("degrees") {
    CHECK(children(VertexId::root(), 4).size() == 4);
    CHECK(neighbors(VertexId::root(), 3).size() == 3);
    const auto c = children(VertexId::root(), 2)[1];
    CHECK(neighbors(c, 2).size() == 3);
    CHECK(neighbors(c, 3).size() == 4);
    CHECK(children(c, 2)[0].depth() == 2);
    CHECK_THROWS_AS(validate_degree(1), ValidationError);
  }

  TEST_CASE("parent and round trips") {
    CHECK_FALSE(parent(VertexId::root()).has_value());
    CHECK(*parent(VertexId::parse("0.1")) == VertexId::parse("0"));
    const VertexId v = VertexId::parse("2.0.1");
    for (const auto& c : children(v, 3)) CHECK(*parent(c) == v);
    CHECK(VertexId::parse(v.to_string()) == v);
    CHECK(VertexId::root().to_string() == "ε");
    CHECK(VertexId::parse("ε").is_root());
    CHECK_THROWS_AS(VertexId::parse("1..2"), ValidationError);
    CHECK_THROWS_AS(VertexId::parse("x"), ValidationError);
  }

  TEST_CASE("neighbour symmetry, distinct ids and distances") {
    const unsigned d = 3;
    std::vector<VertexId> all{VertexId::root()};
    for (std::size_t i = 0; all.size() < 40; ++i)
      for (const auto& c : children(all[i], d)) all.push_back(c);
    std::set<VertexId> unique(all.begin(), all.end());
    CHECK(unique.size() == all.size());
    for (const auto& u : all) {
      CHECK(distance(VertexId::root(), u) == u.depth());
      for (const auto& v : neighbors(u, d)) {
        const auto back = neighbors(v, d);
        CHECK(std::find(back.begin(), back.end(), u) != back.end());
        CHECK(distance(u, v) == 1);
      }
    }
    CHECK(distance(VertexId::parse("0.1"), VertexId::parse("0.2.2")) == 3);
    CHECK(distance(VertexId::parse("1"), VertexId::parse("2")) == 2);
  }

  TEST_CASE("truncated tree indexing") {
    const TruncatedTree t(3, 2);
    CHECK(t.size() == 13);
    CHECK(TruncatedTree::count(3, 2) == 13);
    CHECK(TruncatedTree::count(2, 0) == 1);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto v = t.vertex(i);
      CHECK(*t.index_of(v) == i);
      CHECK(t.depth_of(i) == v.depth());
      for (auto c : t.children_of(i)) CHECK(*t.parent_of(c) == i);
      if (t.depth_of(i) == 2) CHECK(t.children_of(i).empty());
    }
    CHECK_FALSE(t.index_of(VertexId::parse("0.0.0")).has_value());
    CHECK(t.neighbors_of(0).size() == 3);
    CHECK(t.neighbors_of(1).size() == 4);
    CHECK(t.neighbors_of(5).size() == 1);
  }
}
