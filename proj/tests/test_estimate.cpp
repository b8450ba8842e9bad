#include <doctest.h>

#include <cmath>

#include "cptree/bounds.hpp"
#include "cptree/error.hpp"
#include "cptree/estimate.hpp"

using namespace cptree;
using namespace cptree::estimate;

namespace {

const WeightDistribution kOne = WeightDistribution::constant(1.0);
const WeightDistribution kTwoPoint = WeightDistribution::parse("0.5:0.5,1:0.5");

}  // namespace

TEST_SUITE("estimate") {
  TEST_CASE("sweep is monotone and reproducible") {
    const std::vector<double> grid{0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
    RunLimits lim;
    lim.t_max = 50.0;
    lim.size_cap = 1000;
    const auto a = sweep(10, kOne, grid, lim, 500, 3, 1);
    REQUIRE(a.rows.size() == grid.size());
    for (std::size_t k = 1; k < grid.size(); ++k) CHECK(a.rows[k].survivors >= a.rows[k - 1].survivors);
    CHECK(a.rows.front().survivors == 0);
    CHECK(a.rows.back().estimate > 0.5);
    CHECK(a.diagnostics.inclusion_violations == 0);
    CHECK(a.diagnostics.rate_bound_violations == 0);
    const auto b = sweep(10, kOne, grid, lim, 500, 3, 3);
    for (std::size_t k = 0; k < grid.size(); ++k) CHECK(a.rows[k].survivors == b.rows[k].survivors);
    const std::vector<double> bad{0.2, 0.1};
    CHECK_THROWS_AS(sweep(10, kOne, bad, lim, 10, 1), ValidationError);
  }

  TEST_CASE("classification") {
    SurvivalEstimate s;
    s.replicas = 1000;
    s.ci = wilson_interval(0, 1000);
    CHECK(classify(s, 0.005) == Classification::dead);
    s.ci = wilson_interval(500, 1000);
    CHECK(classify(s, 0.005) == Classification::alive);
    s.ci = wilson_interval(5, 1000);
    CHECK(classify(s, 0.005) == Classification::unresolved);
    CHECK(std::string(to_string(Classification::unresolved)) == "unresolved");
  }

  TEST_CASE("bisection brackets lambda_c between the analytic bounds") {
    BisectOptions o;
    o.t_max = 50.0;
    o.replicas = 1000;
    o.size_cap = 1000;
    o.tolerance = 0.02;
    o.seed = 7;
    const auto est = bisect_lambda_c(10, kOne, o);
    CHECK(est.lambda_dead < est.lambda_alive);
    CHECK(est.sandwich.verdict == bounds::Verdict::pass);
    CHECK(est.bracket().hi >= bounds::lower_bound_lambda_e(10, kOne));
    CHECK(est.bracket().lo <= *bounds::report(10, kOne).lambda_c_upper);
    CHECK_FALSE(est.steps.empty());
    if (!est.warning) CHECK(est.lambda_alive - est.lambda_dead <= o.tolerance * (1 + 1e-9));
    o.tolerance = 0.0;
    CHECK_THROWS_AS(bisect_lambda_c(10, kOne, o), ValidationError);
    o.tolerance = 0.02;
    o.replicas = 400;  // 0/400 has a Wilson upper limit above 0.005
    CHECK_THROWS_AS(bisect_lambda_c(10, kOne, o), ValidationError);
  }

  TEST_CASE("lambda_e estimate on a subcritical grid") {
    const std::vector<double> rates{0.02, 0.05};
    const std::vector<double> times{5, 6, 7, 8};
    const auto est = estimate_lambda_e(6, kOne, rates, times, 50000, 2);
    REQUIRE(est.rows.size() == 2);
    for (const auto& r : est.rows) {
      CHECK(r.decaying);
      CHECK(r.analytic_bound == doctest::Approx(bounds::decay_exponent_bound(r.lambda, 6, kOne)));
      CHECK(r.fit.slope <= r.analytic_bound + 3 * r.fit.std_error);
    }
    CHECK(est.lambda_e == 0.05);
  }

  TEST_CASE("asymptotic sweep without simulation") {
    const std::vector<unsigned> ds{4, 16, 64, 256};
    const auto rows = asymptotic_sweep(kOne, ds);
    REQUIRE(rows.size() == 4);
    CHECK_FALSE(rows[0].upper.has_value());
    for (std::size_t i = 1; i < 4; ++i) {
      const double d = ds[i];
      CHECK(rows[i].d_times_upper.value() ==
            doctest::Approx(d * ((d - 2) - std::sqrt((d - 2) * (d - 2) - 4)) / 2).epsilon(1e-12));
    }
    for (const auto& r : rows) {
      CHECK(r.d_times_lower == doctest::Approx(r.d / (r.d + 1.0)));
      CHECK(r.asymptote == 1.0);
      CHECK_FALSE(r.estimate.has_value());
    }
  }
}
