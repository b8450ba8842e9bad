#include <doctest.h>

#include <cmath>

#include "cptree/bounds.hpp"
#include "cptree/contact.hpp"
#include "cptree/coupled.hpp"
#include "cptree/error.hpp"

using namespace cptree;

namespace {

const WeightDistribution kOne = WeightDistribution::constant(1.0);
const WeightDistribution kTwoPoint = WeightDistribution::parse("0.5:0.5,1:0.5");

SurvivalQuery query(unsigned d, double lambda, std::uint64_t replicas, double t_max, std::uint64_t seed) {
  SurvivalQuery q;
  q.d = d;
  q.lambda = lambda;
  q.replicas = replicas;
  q.limits.t_max = t_max;
  q.master_seed = seed;
  return q;
}

}  // namespace

TEST_SUITE("contact") {
  TEST_CASE("limits validation") {
    RunLimits l;
    l.size_cap = 0;
    CHECK_THROWS_AS(validate(l), ValidationError);
    l = RunLimits{};
    l.depth_cap = 0;
    CHECK_THROWS_AS(validate(l), ValidationError);
    l = RunLimits{};
    l.checkpoints = {2.0, 1.0};
    CHECK_THROWS_AS(validate(l), ValidationError);
  }

  TEST_CASE("zero root weight confines the infection to the root") {
    const auto dist = WeightDistribution::parse("0:0.5,1:0.5");
    std::uint64_t seed = 0;
    while (QuenchedEnvironment(seed, dist).weight_of(VertexId::root()) != 0.0) ++seed;
    const QuenchedEnvironment env(seed, dist);
    MeanAccumulator ext;
    for (std::uint64_t i = 0; i < 20000; ++i) {
      Rng rng = make_stream(1, {i});
      const auto s = run(env, 3, 5.0, RunLimits{}, rng);
      REQUIRE(s.extinction_time.has_value());
      REQUIRE(s.max_size == 1);
      ext.add(*s.extinction_time);
    }
    CHECK(std::abs(ext.mean() - 1.0) < 3 * ext.stderr_of_mean());
  }

  TEST_CASE("pure death has Exp(1) extinction") {
    auto q = query(2, 0.0, 100000, 200.0, 11);
    const auto runs = run_replicas(kOne, q);
    MeanAccumulator m;
    for (const auto& r : runs) m.add(*r.extinction_time);
    CHECK(std::abs(m.mean() - 1.0) < 0.01);
  }

  TEST_CASE("survival estimates against thresholds") {
    CHECK(survival_probability(kOne, query(4, 0.0, 2000, 50.0, 3)).estimate == 0.0);
    const auto sub = survival_probability(kOne, query(6, 0.05, 10000, 200.0, 4));
    CHECK(sub.survivors == 0);
    CHECK(sub.ci.contains(0.0));
    auto q = query(6, 1.0, 2000, 200.0, 5);
    q.limits.size_cap = 10000;
    const auto sup = survival_probability(kOne, q);
    // Pilot (2000 replicas, same caps): 0.828.
    const double pilot = 0.828, pilot_sigma = std::sqrt(pilot * (1 - pilot) / 2000);
    const double sigma = std::sqrt(sup.estimate * (1 - sup.estimate) / sup.replicas);
    CHECK(sup.estimate > 0.3);
    CHECK(std::abs(sup.estimate - pilot) < 3 * std::hypot(sigma, pilot_sigma));
    CHECK(sup.rate_bound_violations == 0);
    CHECK(sup.censored_size == sup.survivors);
  }

  TEST_CASE("rate table matches a recomputation during a run") {
    const QuenchedEnvironment env(8, WeightDistribution::parse("0.2:0.3,0.7:0.3,1.3:0.4", 1.5));
    ContactProcess cp(3, 0.8);
    cp.reset(env);
    Rng rng = make_stream(8, {1});
    double t = 0.0;
    for (int step = 0; step < 200 && !cp.extinct(); ++step) {
      t += 0.05;
      cp.advance(t, rng, 5000);
      REQUIRE(cp.check_invariants() < 1e-9);
      const double cached = cp.total_rate(), fresh = cp.total_rate_recomputed();
      REQUIRE(std::abs(cached - fresh) <= 1e-9 * std::max(1.0, fresh));
    }
    CHECK(cp.rate_bound_violations() == 0);
  }

  TEST_CASE("results do not depend on the thread count") {
    auto q = query(3, 0.6, 600, 20.0, 21);
    q.limits.size_cap = 500;
    q.limits.checkpoints = {1.0, 5.0, 10.0};
    q.threads = 1;
    const auto a = run_replicas(kTwoPoint, q);
    q.threads = 4;
    const auto b = run_replicas(kTwoPoint, q);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].extinction_time == b[i].extinction_time);
      CHECK(a[i].checkpoint_sizes == b[i].checkpoint_sizes);
      CHECK(a[i].censored == b[i].censored);
    }
  }

  TEST_CASE("quenched mode shares one environment, annealed mode does not") {
    CHECK(environment_seed(5, EnvironmentMode::quenched, 0) == environment_seed(5, EnvironmentMode::quenched, 9));
    CHECK(environment_seed(5, EnvironmentMode::annealed, 0) != environment_seed(5, EnvironmentMode::annealed, 9));
    auto q = query(3, 0.5, 10, 5.0, 1);
    q.environment_seed = 4;
    CHECK_THROWS_AS(run_replicas(kOne, q), ValidationError);
    q.mode = EnvironmentMode::quenched;
    CHECK_NOTHROW(run_replicas(kOne, q));
  }

  TEST_CASE("checkpoints after extinction are zero and censoring is exclusive") {
    auto q = query(2, 0.3, 200, 10.0, 2);
    q.limits.checkpoints = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    for (const auto& r : run_replicas(kOne, q)) {
      CHECK(r.extinction_time.has_value() != (r.censored != Censor::none));
      if (r.extinction_time) {
        for (const auto& [t, n] : r.checkpoint_sizes)
          if (t >= *r.extinction_time) CHECK(n == 0);
        CHECK(r.checkpoint_sizes.size() == 10);
      }
    }
  }

  TEST_CASE("truncated process from all ones") {
    const QuenchedEnvironment env(1, kOne);
    ContactProcess cp(2, 0.5, 3);
    cp.reset_all(env);
    CHECK(cp.size() == 15);
    Rng rng = make_stream(1, {2});
    cp.advance(0.5, rng);
    CHECK(cp.check_invariants() < 1e-9);
    ContactProcess untruncated(2, 0.5);
    CHECK_THROWS_AS(untruncated.reset_all(env), ValidationError);
    const VertexId outside = VertexId::parse("0.0.0.0");
    CHECK_THROWS_AS(cp.reset(env, std::span<const VertexId>(&outside, 1)), ValidationError);
  }

  TEST_CASE("decay rate: pure death, subcritical bound, reproducibility") {
    const std::vector<double> grid{2, 5, 6, 7, 8};
    const auto death = decay_rate(kOne, 3, 0.0, grid, 100000, 1);
    CHECK(death.times.size() == 4);
    CHECK(std::abs(death.slope + 1.0) < 3 * death.std_error);

    const std::vector<double> g6{5, 6, 7, 8, 9, 10};
    const auto a = decay_rate(kOne, 6, 0.1, g6, 100000, 2);
    CHECK(a.slope <= bounds::decay_exponent_bound(0.1, 6, kOne) + 3 * a.std_error);
    const auto b = decay_rate(kOne, 6, 0.1, g6, 100000, 3);
    CHECK(std::abs(a.slope - b.slope) < 3 * std::hypot(a.std_error, b.std_error));

    const std::vector<double> too_long{5, 20, 40, 60};
    try {
      decay_rate(kOne, 2, 0.0, too_long, 1000, 4);
      FAIL("expected a budget error");
    } catch (const BudgetError& e) {
      CHECK(std::string(e.what()) == "grid too long for replica budget");
    }
    const std::vector<double> short_grid{5, 6, 7};
    CHECK_THROWS_AS(decay_rate(kOne, 2, 0.0, short_grid, 1000, 4), ValidationError);
  }

  TEST_CASE("splitting estimator recovers pure death far below 1/replicas") {
    const std::vector<double> grid{5, 10, 15, 20, 25, 30};
    const auto fit = decay_rate_splitting(kOne, 2, 0.0, grid, 20000, 5, 0, 1'000'000, 10);
    CHECK(fit.estimator == "splitting");
    CHECK(std::abs(fit.slope + 1.0) < 3.5 * fit.std_error);
    CHECK(fit.survival.back() == doctest::Approx(std::exp(-30.0)).epsilon(0.2));
    CHECK_THROWS_AS(decay_rate_splitting(kOne, 2, 0.0, grid, 50, 5), ValidationError);
  }

  TEST_CASE("fit_decay on exact exponential data") {
    const std::vector<double> t{5, 10, 15, 20};
    std::vector<double> s;
    for (double x : t) s.push_back(0.3 * std::exp(-0.7 * x));
    const auto fit = fit_decay(t, s, 1000000);
    CHECK(fit.slope == doctest::Approx(-0.7).epsilon(1e-12));
    CHECK(fit.std_error > 0.0);
  }
}

TEST_SUITE("coupled") {
  TEST_CASE("constructor validation") {
    CHECK_THROWS_AS(GraphicalContact(2, {}), ValidationError);
    CHECK_THROWS_AS(GraphicalContact(2, {0.5, 0.5}), ValidationError);
    CHECK_THROWS_AS(GraphicalContact(2, std::vector<double>(64, 0.1)), ValidationError);
    const QuenchedEnvironment env(1, kOne);
    Rng rng = make_stream(1, {1});
    CHECK_THROWS_AS(run_coupled(env, 2, 0.5, 0.5, RunLimits{}, rng), ValidationError);
    CHECK_THROWS_AS(run_coupled(env, 2, 0.6, 0.5, RunLimits{}, rng), ValidationError);
  }

  TEST_CASE("nearby rates: inclusion always, survival ordered") {
    RunLimits lim;
    lim.t_max = 30.0;
    lim.size_cap = 2000;
    CouplingDiagnostics diag;
    int low_alive = 0, high_alive = 0;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      const QuenchedEnvironment env(derive_seed(1, {i}), kTwoPoint);
      Rng rng = make_stream(2, {i});
      const auto [lo, hi] = run_coupled(env, 3, 0.5 - 1e-3, 0.5, lim, rng, &diag);
      REQUIRE((!lo.survived() || hi.survived()));
      low_alive += lo.survived();
      high_alive += hi.survived();
    }
    CHECK(diag.inclusion_violations == 0);
    CHECK(diag.rate_bound_violations == 0);
    CHECK(high_alive >= low_alive);
    CHECK(high_alive > 0);
  }

  TEST_CASE("coupled engine and direct engine have the same law") {
    // Fraction alive at t = 4 for several sizes, two independent engines.
    const unsigned d = 3;
    const double lambda = 0.45, horizon = 4.0;
    const std::uint64_t n = 20000;
    RunLimits lim;
    lim.t_max = horizon;
    std::uint64_t alive_direct = 0, alive_coupled = 0;
    GraphicalContact engine(d, {lambda});
    for (std::uint64_t i = 0; i < n; ++i) {
      const QuenchedEnvironment env(derive_seed(3, {i}), kTwoPoint);
      Rng r1 = make_stream(4, {i});
      alive_direct += run(env, d, lambda, lim, r1).survived();
      Rng r2 = make_stream(5, {i});
      alive_coupled += engine.run(env, lim, r2)[0].survived();
    }
    const double p1 = double(alive_direct) / n, p2 = double(alive_coupled) / n;
    const double pooled = (p1 + p2) / 2;
    const double se = std::sqrt(2 * pooled * (1 - pooled) / n);
    CHECK(std::abs(p1 - p2) < 3 * se);
  }

  TEST_CASE("SIR infections are contained in the matched contact process") {
    RunLimits lim;
    lim.t_max = 30.0;
    lim.size_cap = 1000;
    CouplingDiagnostics diag;
    for (std::uint64_t i = 0; i < 3000; ++i) {
      const QuenchedEnvironment env(derive_seed(6, {i}), kTwoPoint);
      Rng rng = make_stream(7, {i});
      GraphicalContact g(3, {0.4, 0.8, 1.2}, 1);
      g.run(env, lim, rng, &diag);
    }
    CHECK(diag.sir_infections > 1000);
    CHECK(diag.domination_violations == 0);
    CHECK(diag.inclusion_violations == 0);
  }
}
