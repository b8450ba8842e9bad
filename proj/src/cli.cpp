#include "cptree/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "cptree/bounds.hpp"
#include "cptree/contact.hpp"
#include "cptree/duality.hpp"
#include "cptree/error.hpp"
#include "cptree/estimate.hpp"
#include "cptree/linear_system.hpp"
#include "cptree/sir.hpp"
#include "cptree/stats.hpp"
#include "cptree/walks.hpp"

namespace cptree::cli {

using Json = nlohmann::ordered_json;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!out.emplace(key, value).second) throw ValidationError("config key '" + key + "' repeated");
  }
  return out;
}

namespace {

struct Output {
  Json result = Json::object();
  std::vector<std::string> csv_header;
  std::vector<std::vector<std::string>> csv_rows;
};

struct Common {
  std::string format = "json";
  std::string out_path;
  std::string config_path;
  unsigned threads = 0;
  std::string dist = "1:1";
  double bound_m = 0.0;
  std::uint64_t seed = 1;
};

Json interval_json(const Interval& i) { return Json::array({i.lo, i.hi}); }

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << x;
  return s.str();
}

// Each command registers its options, a config echo, and an action.
struct Command {
  CLI::App* app = nullptr;
  std::function<Json()> config;
  std::function<Output()> action;
};

void add_common(CLI::App* sub, Common& c, bool with_dist, bool with_seed) {
  sub->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--out", c.out_path, "Output file (default: stdout, or $CPTREE_OUT_DIR/<command>.<format>)");
  sub->add_option("--config", c.config_path, "Flat key = value file; explicit flags take precedence");
  sub->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
  if (with_dist) {
    sub->add_option("--dist", c.dist, "Weight law as value:prob[,value:prob...]");
    sub->add_option("--M", c.bound_m, "A-priori weight bound M (default: largest atom)");
  }
  if (with_seed) sub->add_option("--seed", c.seed, "Master seed");
}

Json dist_json(const WeightDistribution& dist) { return Json{{"dist", dist.to_string()}, {"M", dist.bound()}}; }

RunLimits limits_from(double t_max, std::size_t size_cap, std::uint32_t depth_cap) {
  RunLimits l;
  l.t_max = t_max;
  l.size_cap = size_cap;
  l.depth_cap = depth_cap;
  return l;
}

constexpr const char* kCensoring = "censoring by size cap, depth cap or horizon counts as survival";

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contact process with random vertex weights on the rooted regular tree", kToolName};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Common common;
  std::map<std::string, Command> commands;
  auto weights = [&] { return WeightDistribution::parse(common.dist, common.bound_m); };

  // bounds ------------------------------------------------------------------
  struct {
    unsigned d = 2;
    std::vector<unsigned> d_list;
  } pb;
  {
    Command& cmd = commands["bounds"];
    cmd.app = app.add_subcommand("bounds", "Analytic bounds on lambda_e, lambda_c and the large-d asymptote");
    add_common(cmd.app, common, true, false);
    cmd.app->add_option("--d", pb.d, "Tree degree");
    cmd.app->add_option("--d-list", pb.d_list, "Several degrees (comma separated), one row each")->delimiter(',');
    cmd.config = [&] {
      const auto dist = weights();
      Json j = dist_json(dist);
      j["d"] = pb.d_list.empty() ? std::vector<unsigned>{pb.d} : pb.d_list;
      return j;
    };
    cmd.action = [&] {
      const auto dist = weights();
      Output o;
      o.csv_header = {"d", "lower", "upper", "d_times_lower", "d_times_upper", "asymptote"};
      const auto ds = pb.d_list.empty() ? std::vector<unsigned>{pb.d} : pb.d_list;
      Json rows = Json::array();
      for (unsigned d : ds) {
        const auto r = bounds::report(d, dist);
        std::optional<double> dup;
        if (r.lambda_c_upper) dup.emplace(d * r.lambda_c_upper.value());
        Json row{{"d", d},
                 {"lower", r.lambda_e_lower},
                 {"upper", optional_json(r.lambda_c_upper)},
                 {"d_times_lower", d * r.lambda_e_lower},
                 {"d_times_upper", optional_json(dup)},
                 {"asymptote", r.asymptote},
                 {"upper_condition_interval",
                  r.upper_condition_interval ? interval_json(*r.upper_condition_interval) : Json(nullptr)},
                 {"mean_rho", r.mean_rho},
                 {"second_moment", r.second_moment},
                 {"M", r.bound_m},
                 {"rate_sup_at_lower", r.rate_sup_at_lower},
                 {"rate_sup_at_upper", optional_json(r.rate_sup_at_upper)}};
        rows.push_back(row);
        o.csv_rows.push_back({std::to_string(d), format_number(r.lambda_e_lower), optional_csv(r.lambda_c_upper),
                              format_number(d * r.lambda_e_lower), optional_csv(dup), format_number(r.asymptote)});
      }
      o.result["rows"] = rows;
      return o;
    };
  }

  // simulate ----------------------------------------------------------------
  struct {
    unsigned d = 2;
    double lambda = 1.0;
    double t_max = 200.0;
    std::uint64_t replicas = 1000;
    std::string mode = "annealed";
    std::optional<std::uint64_t> env_seed;
    std::size_t size_cap = 1'000'000;
    std::uint32_t depth_cap = 10'000;
    std::vector<double> checkpoints;
  } ps;
  {
    Command& cmd = commands["simulate"];
    cmd.app = app.add_subcommand("simulate", "Survival of the contact process from the root");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", ps.d, "Tree degree");
    cmd.app->add_option("--lambda", ps.lambda, "Infection rate");
    cmd.app->add_option("--t-max", ps.t_max, "Time horizon");
    cmd.app->add_option("--replicas", ps.replicas, "Independent runs");
    cmd.app->add_option("--mode", ps.mode, "Environment mode")->check(CLI::IsMember({"annealed", "quenched"}));
    cmd.app->add_option("--env-seed", ps.env_seed, "Environment seed (quenched mode only)");
    cmd.app->add_option("--size-cap", ps.size_cap, "Censor when this many sites are infected");
    cmd.app->add_option("--depth-cap", ps.depth_cap, "Censor when infection reaches this depth");
    cmd.app->add_option("--checkpoints", ps.checkpoints, "Times at which |C_t| is recorded")->delimiter(',');
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", ps.d}, {"lambda", ps.lambda}, {"t_max", ps.t_max}, {"replicas", ps.replicas},
                    {"mode", ps.mode}, {"env_seed", optional_json(ps.env_seed)}, {"seed", common.seed},
                    {"size_cap", ps.size_cap}, {"depth_cap", ps.depth_cap}, {"checkpoints", ps.checkpoints}});
      return j;
    };
    cmd.action = [&] {
      SurvivalQuery q;
      q.d = ps.d;
      q.lambda = ps.lambda;
      q.limits = limits_from(ps.t_max, ps.size_cap, ps.depth_cap);
      q.limits.checkpoints = ps.checkpoints.empty() ? std::vector<double>{ps.t_max} : ps.checkpoints;
      q.replicas = ps.replicas;
      q.master_seed = common.seed;
      q.mode = ps.mode == "quenched" ? EnvironmentMode::quenched : EnvironmentMode::annealed;
      q.environment_seed = ps.env_seed;
      q.threads = common.threads;
      const auto runs = run_replicas(weights(), q);
      const auto est = summarize(runs);
      Output o;
      o.result = Json{{"estimate", est.estimate},
                      {"ci", interval_json(est.ci)},
                      {"replicas", est.replicas},
                      {"survivors", est.survivors},
                      {"censored", {{"time_horizon", est.censored_time},
                                    {"size_cap", est.censored_size},
                                    {"depth_cap", est.censored_depth}}},
                      {"censor_fraction", est.censor_fraction()},
                      {"rate_bound_violations", est.rate_bound_violations},
                      {"seeds", {{"master", common.seed},
                                 {"environment", q.mode == EnvironmentMode::quenched
                                                     ? Json(ps.env_seed.value_or(
                                                           environment_seed(common.seed, q.mode, 0)))
                                                     : Json("per replica")}}},
                      {"censoring", kCensoring}};
      o.csv_header = {"replica", "t", "n_infected", "censored"};
      for (std::size_t i = 0; i < runs.size(); ++i)
        for (const auto& [t, n] : runs[i].checkpoint_sizes)
          o.csv_rows.push_back({std::to_string(i), format_number(t), std::to_string(n), to_string(runs[i].censored)});
      return o;
    };
  }

  // sweep -------------------------------------------------------------------
  struct {
    unsigned d = 2;
    std::vector<double> lambdas;
    double t_max = 200.0;
    std::uint64_t replicas = 1000;
    std::size_t size_cap = 1'000'000;
    std::uint32_t depth_cap = 10'000;
  } pw;
  {
    Command& cmd = commands["sweep"];
    cmd.app = app.add_subcommand("sweep", "Annealed survival over a rate grid with common random numbers");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", pw.d, "Tree degree");
    cmd.app->add_option("--lambdas", pw.lambdas, "Increasing rate grid (at most 63)")->delimiter(',')->required();
    cmd.app->add_option("--t-max", pw.t_max, "Time horizon");
    cmd.app->add_option("--replicas", pw.replicas, "Replicas per rate");
    cmd.app->add_option("--size-cap", pw.size_cap, "Censor when this many sites are infected");
    cmd.app->add_option("--depth-cap", pw.depth_cap, "Censor when infection reaches this depth");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", pw.d}, {"lambdas", pw.lambdas}, {"t_max", pw.t_max}, {"replicas", pw.replicas},
                    {"seed", common.seed}, {"size_cap", pw.size_cap}, {"depth_cap", pw.depth_cap}});
      return j;
    };
    cmd.action = [&] {
      const auto res = estimate::sweep(pw.d, weights(), pw.lambdas, limits_from(pw.t_max, pw.size_cap, pw.depth_cap),
                                       pw.replicas, common.seed, common.threads);
      Output o;
      o.csv_header = {"lambda", "estimate", "ci_lo", "ci_hi", "censor_fraction", "replicas"};
      Json rows = Json::array();
      for (const auto& r : res.rows) {
        rows.push_back(Json{{"lambda", r.lambda}, {"estimate", r.estimate}, {"ci", interval_json(r.ci)},
                            {"censor_fraction", r.censor_fraction}, {"replicas", r.replicas}});
        o.csv_rows.push_back({format_number(r.lambda), format_number(r.estimate), format_number(r.ci.lo),
                              format_number(r.ci.hi), format_number(r.censor_fraction), std::to_string(r.replicas)});
      }
      o.result = Json{{"rows", rows},
                      {"inclusion_violations", res.diagnostics.inclusion_violations},
                      {"rate_bound_violations", res.diagnostics.rate_bound_violations},
                      {"censoring", kCensoring}};
      return o;
    };
  }

  // lambda-c ----------------------------------------------------------------
  struct {
    unsigned d = 2;
    estimate::BisectOptions opt;
  } pc;
  {
    Command& cmd = commands["lambda-c"];
    cmd.app = app.add_subcommand("lambda-c", "Bisection estimate of the annealed critical rate");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", pc.d, "Tree degree");
    cmd.app->add_option("--t-max", pc.opt.t_max, "Time horizon");
    cmd.app->add_option("--replicas", pc.opt.replicas, "Replicas per probe");
    cmd.app->add_option("--tolerance", pc.opt.tolerance, "Target bracket width");
    cmd.app->add_option("--threshold", pc.opt.threshold, "Survival threshold separating dead from alive");
    cmd.app->add_option("--size-cap", pc.opt.size_cap, "Censor when this many sites are infected");
    cmd.app->add_option("--depth-cap", pc.opt.depth_cap, "Censor when infection reaches this depth");
    cmd.app->add_option("--max-steps", pc.opt.max_steps, "Probe budget");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", pc.d}, {"t_max", pc.opt.t_max}, {"replicas", pc.opt.replicas},
                    {"tolerance", pc.opt.tolerance}, {"threshold", pc.opt.threshold}, {"seed", common.seed},
                    {"size_cap", pc.opt.size_cap}, {"depth_cap", pc.opt.depth_cap}, {"max_steps", pc.opt.max_steps}});
      return j;
    };
    cmd.action = [&] {
      auto opt = pc.opt;
      opt.seed = common.seed;
      opt.threads = common.threads;
      const auto dist = weights();
      const auto est = estimate::bisect_lambda_c(pc.d, dist, opt);
      Output o;
      o.csv_header = {"lambda", "estimate", "ci_lo", "ci_hi", "classification"};
      Json steps = Json::array();
      for (const auto& s : est.steps) {
        steps.push_back(Json{{"lambda", s.lambda}, {"estimate", s.survival.estimate},
                             {"ci", interval_json(s.survival.ci)},
                             {"censor_fraction", s.survival.censor_fraction()},
                             {"classification", estimate::to_string(s.classification)}});
        o.csv_rows.push_back({format_number(s.lambda), format_number(s.survival.estimate),
                              format_number(s.survival.ci.lo), format_number(s.survival.ci.hi),
                              estimate::to_string(s.classification)});
      }
      o.result = Json{{"bracket", interval_json(est.bracket())},
                      {"warning", est.warning},
                      {"warning_reason", est.warning_reason},
                      {"sandwich", {{"verdict", est.sandwich.verdict == bounds::Verdict::pass ? "pass" : "fail"},
                                    {"lower", est.sandwich.lower},
                                    {"upper", optional_json(est.sandwich.upper)},
                                    {"reason", est.sandwich.reason}}},
                      {"alive_survival", {{"half_horizon", est.alive_survival_half_horizon},
                                          {"full_horizon", est.alive_survival_full_horizon}}},
                      {"steps", steps},
                      {"censoring", kCensoring},
                      {"quantity", "annealed critical value at a finite horizon"}};
      return o;
    };
  }

  // lambda-e ----------------------------------------------------------------
  struct {
    unsigned d = 2;
    std::vector<double> lambdas;
    std::vector<double> times{5, 10, 15, 20};
    std::uint64_t replicas = 100'000;
    std::string estimator = "direct";
    std::size_t batches = 10;
    std::size_t size_cap = 1'000'000;
  } pe;
  {
    Command& cmd = commands["lambda-e"];
    cmd.app = app.add_subcommand("lambda-e", "Decay-rate fits and the largest significantly decaying rate");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", pe.d, "Tree degree");
    cmd.app->add_option("--lambdas", pe.lambdas, "Increasing positive rate grid")->delimiter(',')->required();
    cmd.app->add_option("--times", pe.times, "Time grid (points below 5 are dropped)")->delimiter(',');
    cmd.app->add_option("--replicas", pe.replicas, "Replicas (or particles) per rate");
    cmd.app->add_option("--estimator", pe.estimator, "Survival estimator")
        ->check(CLI::IsMember({"direct", "splitting"}));
    cmd.app->add_option("--batches", pe.batches, "Independent batches for the splitting estimator");
    cmd.app->add_option("--size-cap", pe.size_cap, "Censor when this many sites are infected");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", pe.d}, {"lambdas", pe.lambdas}, {"times", pe.times}, {"replicas", pe.replicas},
                    {"estimator", pe.estimator}, {"batches", pe.batches}, {"seed", common.seed},
                    {"size_cap", pe.size_cap}});
      return j;
    };
    cmd.action = [&] {
      const auto dist = weights();
      estimate::LambdaEEstimate est;
      if (pe.estimator == "direct") {
        est = estimate::estimate_lambda_e(pe.d, dist, pe.lambdas, pe.times, pe.replicas, common.seed, common.threads,
                                          pe.size_cap);
      } else {
        for (std::size_t k = 0; k < pe.lambdas.size(); ++k) {
          require(pe.lambdas[k] > 0.0, "lambda grid entries must be positive");
          if (k) require(pe.lambdas[k] > pe.lambdas[k - 1], "lambda grid must be strictly increasing");
          auto fit = decay_rate_splitting(dist, pe.d, pe.lambdas[k], pe.times, pe.replicas,
                                          derive_seed(common.seed, {tag::grid, k}), common.threads, pe.size_cap,
                                          pe.batches);
          const bool decaying = fit.slope + 3.0 * fit.std_error < 0.0;
          est.rows.push_back({pe.lambdas[k], std::move(fit),
                              bounds::decay_exponent_bound(pe.lambdas[k], pe.d, dist), decaying});
          if (decaying) est.lambda_e = pe.lambdas[k];
        }
      }
      Output o;
      o.csv_header = {"lambda", "slope", "std_error", "analytic_bound", "decaying"};
      Json rows = Json::array();
      for (const auto& r : est.rows) {
        rows.push_back(Json{{"lambda", r.lambda}, {"slope", r.fit.slope}, {"std_error", r.fit.std_error},
                            {"analytic_bound", r.analytic_bound}, {"decaying", r.decaying},
                            {"times", r.fit.times}, {"survival", r.fit.survival},
                            {"rate_bound_violations", r.fit.rate_bound_violations}});
        o.csv_rows.push_back({format_number(r.lambda), format_number(r.fit.slope), format_number(r.fit.std_error),
                              format_number(r.analytic_bound), r.decaying ? "1" : "0"});
      }
      o.result = Json{{"rows", rows}, {"lambda_e", optional_json(est.lambda_e)},
                      {"lower_bound", bounds::lower_bound_lambda_e(pe.d, dist)}, {"estimator", pe.estimator}};
      return o;
    };
  }

  // moments -----------------------------------------------------------------
  struct {
    unsigned d = 2;
    double lambda = 1.0;
    std::size_t n_max = 20;
    std::uint64_t mc_runs = 0;
  } pm;
  {
    Command& cmd = commands["moments"];
    cmd.app = app.add_subcommand("moments", "Exact SIR generation moments and the second-moment ratio");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", pm.d, "Tree degree");
    cmd.app->add_option("--lambda", pm.lambda, "Infection rate");
    cmd.app->add_option("--n-max", pm.n_max, "Deepest generation");
    cmd.app->add_option("--mc-runs", pm.mc_runs, "Also estimate the moments from this many SIR runs");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", pm.d}, {"lambda", pm.lambda}, {"n_max", pm.n_max}, {"mc_runs", pm.mc_runs},
                    {"seed", common.seed}});
      return j;
    };
    cmd.action = [&] {
      const auto dist = weights();
      const auto seq = sir::survival_lower_bound_sequence(pm.lambda, pm.d, dist, pm.n_max);
      Output o;
      o.csv_header = {"n", "first_moment", "second_moment_exact", "second_moment_bound", "ratio"};
      Json rows = Json::array();
      for (const auto& r : seq.rows) {
        rows.push_back(Json{{"n", r.n}, {"first_moment", r.first_moment},
                            {"second_moment_exact", r.second_moment_exact},
                            {"second_moment_bound", r.second_moment_bound}, {"ratio", r.ratio}});
        o.csv_rows.push_back({std::to_string(r.n), format_number(r.first_moment),
                              format_number(r.second_moment_exact), format_number(r.second_moment_bound),
                              format_number(r.ratio)});
      }
      o.result = Json{{"rows", rows},
                      {"min_ratio", seq.min_ratio()},
                      {"truncated", seq.truncated},
                      {"condition_holds", seq.condition_holds},
                      {"condition_value", seq.condition_value},
                      {"c_lambda_m", seq.c_lambda_m}};
      if (pm.mc_runs > 0) {
        const auto mc = sir::simulate_moments(pm.d, dist, pm.lambda, pm.n_max, pm.mc_runs, common.seed,
                                              common.threads);
        o.result["monte_carlo"] = Json{{"runs", mc.runs}, {"first", mc.first}, {"first_se", mc.first_se},
                                       {"second", mc.second}, {"second_se", mc.second_se}};
      }
      return o;
    };
  }

  // xi-mean -----------------------------------------------------------------
  struct {
    unsigned d = 2;
    unsigned depth = 3;
    double lambda = 0.2;
    double t = 1.0;
    std::optional<std::uint64_t> env_seed;
    std::uint64_t replicas = 0;
    std::uint64_t annealed_envs = 0;
  } px;
  {
    Command& cmd = commands["xi-mean"];
    cmd.app = app.add_subcommand("xi-mean", "Mean of the linear system on a truncated tree");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", px.d, "Tree degree");
    cmd.app->add_option("--depth", px.depth, "Truncation depth");
    cmd.app->add_option("--lambda", px.lambda, "Infection rate");
    cmd.app->add_option("--t", px.t, "Time");
    cmd.app->add_option("--env-seed", px.env_seed, "Environment seed (default: derived from --seed)");
    cmd.app->add_option("--replicas", px.replicas, "Also simulate xi_t(O) with this many replicas");
    cmd.app->add_option("--annealed-envs", px.annealed_envs, "Also average E xi_t(O) over this many environments");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", px.d}, {"depth", px.depth}, {"lambda", px.lambda}, {"t", px.t},
                    {"env_seed", optional_json(px.env_seed)}, {"seed", common.seed}, {"replicas", px.replicas},
                    {"annealed_envs", px.annealed_envs}});
      return j;
    };
    cmd.action = [&] {
      validate_degree(px.d);
      require(TruncatedTree::count(px.d, px.depth) <= linear::kMaxExactVertices,
              "truncated tree exceeds 20000 vertices");
      const auto dist = weights();
      const std::uint64_t env_seed = px.env_seed.value_or(derive_seed(common.seed, {tag::environment}));
      const auto env = linear::truncate(QuenchedEnvironment(env_seed, dist), px.d, px.depth);
      const auto mean = linear::mean_xi_exact(env, px.lambda, px.t);
      Output o;
      o.csv_header = {"vertex", "mean_xi"};
      for (std::size_t i = 0; i < mean.mean.size(); ++i)
        o.csv_rows.push_back({env.tree.vertex(i).to_string(), format_number(mean.mean[i])});
      o.result = Json{{"environment_seed", env_seed},
                      {"vertices", mean.mean.size()},
                      {"mean_xi_root", mean.mean[0]},
                      {"tail_bound", mean.tail_bound},
                      {"terms", mean.terms},
                      {"annealed_upper_bound", linear::annealed_mean_upper_bound(px.lambda, px.d, dist, px.t)},
                      {"mean_xi", mean.mean}};
      if (px.replicas > 0) {
        const auto s = linear::simulate_xi(env, px.lambda, px.t, px.replicas, common.seed, common.threads);
        o.result["simulated"] = Json{{"replicas", s.replicas}, {"mean", s.mean}, {"std_error", s.std_error},
                                     {"alive_fraction", s.alive_fraction}};
      }
      if (px.annealed_envs > 0) {
        MeanAccumulator acc;
        for (std::uint64_t i = 0; i < px.annealed_envs; ++i) {
          const auto e = linear::truncate(QuenchedEnvironment(derive_seed(common.seed, {tag::environment, i}), dist),
                                          px.d, px.depth);
          acc.add(linear::mean_xi_exact(e, px.lambda, px.t).mean[0]);
        }
        o.result["annealed_average"] =
            Json{{"environments", acc.count()}, {"mean", acc.mean()}, {"std_error", acc.stderr_of_mean()}};
      }
      return o;
    };
  }

  // duality-check -----------------------------------------------------------
  struct {
    unsigned d = 2;
    unsigned depth = 1;
    std::vector<double> lambdas{1.0};
    std::vector<double> times{1.0};
    std::uint64_t environments = 1;
    bool relation = false;
  } pd;
  {
    Command& cmd = commands["duality-check"];
    cmd.app = app.add_subcommand("duality-check", "Exact self-duality check on a small truncated tree");
    add_common(cmd.app, common, true, true);
    cmd.app->add_option("--d", pd.d, "Tree degree");
    cmd.app->add_option("--depth", pd.depth, "Truncation depth");
    cmd.app->add_option("--lambda", pd.lambdas, "Infection rates")->delimiter(',');
    cmd.app->add_option("--t", pd.times, "Times")->delimiter(',');
    cmd.app->add_option("--environments", pd.environments, "Number of environment draws");
    cmd.app->add_flag("--relation", pd.relation, "Also check the duality relation for singleton and pair sets");
    cmd.config = [&] {
      Json j = dist_json(weights());
      j.update(Json{{"d", pd.d}, {"depth", pd.depth}, {"lambdas", pd.lambdas}, {"times", pd.times},
                    {"environments", pd.environments}, {"relation", pd.relation}, {"seed", common.seed}});
      return j;
    };
    cmd.action = [&] {
      validate_degree(pd.d);
      require(TruncatedTree::count(pd.d, pd.depth) <= duality::kMaxVertices, "duality checks need at most 14 vertices");
      const auto dist = weights();
      Output o;
      o.csv_header = {"environment_seed", "lambda", "t", "survival", "root_infected", "discrepancy"};
      Json rows = Json::array();
      double worst = 0.0, worst_relation = 0.0;
      for (std::uint64_t e = 0; e < pd.environments; ++e) {
        const std::uint64_t seed = derive_seed(common.seed, {tag::environment, e});
        const auto env = linear::truncate(QuenchedEnvironment(seed, dist), pd.d, pd.depth);
        const std::size_t n = env.tree.size();
        for (double lambda : pd.lambdas)
          for (double t : pd.times) {
            const auto sd = duality::self_duality(env, lambda, t);
            worst = std::max(worst, sd.discrepancy());
            rows.push_back(Json{{"environment_seed", seed}, {"lambda", lambda}, {"t", t},
                                {"survival", sd.survival}, {"root_infected", sd.root_infected},
                                {"discrepancy", sd.discrepancy()}});
            o.csv_rows.push_back({std::to_string(seed), format_number(lambda), format_number(t),
                                  format_number(sd.survival), format_number(sd.root_infected),
                                  format_number(sd.discrepancy())});
            if (!pd.relation) continue;
            const duality::FiniteCTMC::State all = (duality::FiniteCTMC::State{1} << n) - 1;
            for (duality::FiniteCTMC::State eta : {all, duality::FiniteCTMC::State{1}})
              for (std::size_t x = 0; x < n; ++x)
                for (std::size_t y = x; y < n; ++y) {
                  const duality::FiniteCTMC::State a = (1u << x) | (1u << y);
                  worst_relation =
                      std::max(worst_relation, duality::check_duality_relation(env, lambda, t, eta, a));
                }
          }
      }
      o.result = Json{{"rows", rows}, {"max_discrepancy", worst}, {"pass", worst <= 1e-9}};
      if (pd.relation) o.result["max_relation_discrepancy"] = worst_relation;
      return o;
    };
  }

  // walks -------------------------------------------------------------------
  struct {
    unsigned d = 2;
    std::size_t n = 2;
    std::vector<double> xs{0.5};
    bool pmf = false;
    std::optional<double> tau_s;
  } pk;
  {
    Command& cmd = commands["walks"];
    cmd.app = app.add_subcommand("walks", "Distance law of the simple random walk and the coalescence time");
    add_common(cmd.app, common, false, false);
    cmd.app->add_option("--d", pk.d, "Tree degree");
    cmd.app->add_option("--n", pk.n, "Steps");
    cmd.app->add_option("--x", pk.xs, "Generating-function arguments in (0, 1]")->delimiter(',');
    cmd.app->add_flag("--pmf", pk.pmf, "CSV output lists the distance pmf instead");
    cmd.app->add_option("--tau-s", pk.tau_s, "Evaluate E s^tau at this s");
    cmd.config = [&] {
      return Json{{"d", pk.d}, {"n", pk.n}, {"x", pk.xs}, {"pmf", pk.pmf}, {"tau_s", optional_json(pk.tau_s)}};
    };
    cmd.action = [&] {
      const auto dist = walks::distance_pmf(pk.d, pk.n);
      Output o;
      Json gen = Json::array();
      std::vector<std::vector<std::string>> gen_rows;
      for (double x : pk.xs) {
        const double v = walks::distance_gen_fn(dist, x);
        const double b = walks::distance_gen_bound(pk.d, pk.n, x);
        gen.push_back(Json{{"x", x}, {"value", v}, {"bound", b}});
        gen_rows.push_back({format_number(x), format_number(v), format_number(b)});
      }
      std::vector<double> tau;
      for (std::size_t k = 0; k <= pk.n; ++k) tau.push_back(walks::tau_pmf(pk.d, k));
      o.result = Json{{"pmf", dist.pmf}, {"gen_fn", gen}, {"tau_pmf", tau}};
      if (pk.tau_s) o.result["tau_mgf"] = walks::tau_mgf(pk.d, *pk.tau_s);
      if (pk.pmf) {
        o.csv_header = {"k", "prob"};
        for (std::size_t k = 0; k < dist.pmf.size(); ++k)
          o.csv_rows.push_back({std::to_string(k), format_number(dist.pmf[k])});
      } else {
        o.csv_header = {"x", "value", "bound"};
        o.csv_rows = std::move(gen_rows);
      }
      return o;
    };
  }

  try {
    // Merge the config file: its keys become flags unless given explicitly.
    std::vector<std::string> args = raw_args;
    if (!args.empty() && commands.count(args[0])) {
      CLI::App* sub = commands[args[0]].app;
      std::optional<std::string> config_path;
      for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
      }
      if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw ValidationError("cannot read config file '" + *config_path + "'");
        std::vector<std::string> extra;
        for (const auto& [key, value] : parse_config(in)) {
          if (key == "config") throw ValidationError("config files cannot include other config files");
          const CLI::Option* opt = sub->get_option_no_throw("--" + key);
          if (!opt) throw ValidationError("unknown config key '" + key + "' for command " + args[0]);
          bool given = false;
          for (std::size_t i = 1; i < args.size(); ++i)
            if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) given = true;
          if (given) continue;
          if (opt->get_type_size() == 0) {
            if (value == "true" || value == "1") extra.push_back("--" + key);
            else if (value != "false" && value != "0")
              throw ValidationError("config key '" + key + "' expects true or false");
          } else {
            extra.push_back("--" + key);
            extra.push_back(value);
          }
        }
        args.insert(args.begin() + 1, extra.begin(), extra.end());
      }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);

    std::string name;
    for (const auto& [n, c] : commands)
      if (c.app->parsed()) name = n;
    Command& cmd = commands.at(name);
    set_default_threads(common.threads);

    Json config = cmd.config();
    const std::uint64_t hash = fnv1a(name + "\n" + config.dump());
    Output result = cmd.action();

    std::ostringstream doc;
    if (common.format == "json") {
      Json j{{"tool", kToolName}, {"version", kVersion}, {"command", name},
             {"config_hash", hex64(hash)}, {"config", config}, {"result", result.result}};
      doc << j.dump(2) << '\n';
    } else {
      doc << "# " << kToolName << ' ' << kVersion << " command=" << name << " config_hash=" << hex64(hash) << '\n';
      for (std::size_t i = 0; i < result.csv_header.size(); ++i) doc << (i ? "," : "") << result.csv_header[i];
      doc << '\n';
      for (const auto& row : result.csv_rows) {
        for (std::size_t i = 0; i < row.size(); ++i) doc << (i ? "," : "") << row[i];
        doc << '\n';
      }
    }

    std::string path = common.out_path;
    if (path.empty()) {
      if (const char* dir = std::getenv("CPTREE_OUT_DIR"); dir && *dir)
        path = (std::filesystem::path(dir) / (name + "." + common.format)).string();
    }
    if (path.empty()) {
      out << doc.str();
    } else {
      std::ofstream file(path, std::ios::binary);
      if (!file) throw ValidationError("cannot write output file '" + path + "'");
      file << doc.str();
      out << "wrote " << path << '\n';
    }
    return kOk;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "error: " << msg << '\n';
    return kValidationFailure;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const BudgetError& e) {
    err << "error: " << e.what() << '\n';
    return kBudgetFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cptree::cli
