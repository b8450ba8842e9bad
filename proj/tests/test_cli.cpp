#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cptree/cli.hpp"
#include "cptree/error.hpp"

using namespace cptree;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("hash and number helpers") {
    CHECK(cli::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(cli::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    for (double x : {0.1, 1.0 / 3, 1e-300, 12345.678, -2.5, 0.0}) CHECK(std::stod(cli::format_number(x)) == x);
    CHECK(cli::format_number(0.5) == "0.5");
  }

  TEST_CASE("config parsing") {
    std::istringstream good("# comment\nd = 4\n lambda=0.3  # trailing\n\n");
    const auto m = cli::parse_config(good);
    CHECK(m.at("d") == "4");
    CHECK(m.at("lambda") == "0.3");
    std::istringstream repeated("d = 1\nd = 2\n");
    CHECK_THROWS_AS(cli::parse_config(repeated), ValidationError);
    std::istringstream broken("no equals sign\n");
    CHECK_THROWS_AS(cli::parse_config(broken), ValidationError);
  }

  TEST_CASE("json envelope and csv agree") {
    const auto j = invoke({"bounds", "--d-list", "10", "16", "--format", "json"});
    REQUIRE(j.code == cli::kOk);
    const auto doc = json::parse(j.out);
    CHECK(doc["tool"] == "cptree");
    CHECK(doc["version"] == "1.0.0");
    CHECK(doc["command"] == "bounds");
    CHECK(doc["config_hash"].get<std::string>().size() == 16);
    const auto rows = doc["result"]["rows"];
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["lower"].get<double>() == 1.0 / 11);

    const auto c = invoke({"bounds", "--d-list", "10", "16", "--format", "csv"});
    REQUIRE(c.code == cli::kOk);
    const auto lines = csv_lines(c.out);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "# cptree 1.0.0 command=bounds config_hash=" + doc["config_hash"].get<std::string>());
    std::istringstream header(lines[1]), first(lines[2]);
    std::vector<std::string> names, values;
    for (std::string f; std::getline(header, f, ',');) names.push_back(f);
    for (std::string f; std::getline(first, f, ',');) values.push_back(f);
    REQUIRE(names.size() == values.size());
    for (std::size_t i = 0; i < names.size(); ++i)
      if (rows[0].contains(names[i]) && rows[0][names[i]].is_number())
        CHECK(std::stod(values[i]) == rows[0][names[i]].get<double>());
  }

  TEST_CASE("same seed gives byte-identical output") {
    const std::vector<std::string> args{"simulate", "--d", "3", "--lambda", "0.6", "--replicas", "200",
                                        "--size-cap", "300", "--seed", "9", "--format", "json"};
    const auto a = invoke(args), b = invoke(args);
    REQUIRE(a.code == cli::kOk);
    CHECK(a.out == b.out);
    auto threaded = args;
    threaded.insert(threaded.end(), {"--threads", "3"});
    const auto t = invoke(threaded);
    CHECK(json::parse(t.out)["result"] == json::parse(a.out)["result"]);
  }

  TEST_CASE("config file with flag override") {
    const auto path = std::filesystem::temp_directory_path() / "cptree_cli_test.cfg";
    {
      std::ofstream f(path);
      f << "d = 3\nlambda = 0.2\nreplicas = 40\n";
    }
    const auto from_file = invoke({"simulate", "--config", path.string(), "--format", "json"});
    const auto flags = invoke({"simulate", "--d", "3", "--lambda", "0.2", "--replicas", "40", "--format", "json"});
    REQUIRE(from_file.code == cli::kOk);
    CHECK(json::parse(from_file.out)["config"] == json::parse(flags.out)["config"]);
    CHECK(json::parse(from_file.out)["config_hash"] == json::parse(flags.out)["config_hash"]);
    const auto overridden = invoke({"simulate", "--config", path.string(), "--lambda", "0.3", "--format", "json"});
    const auto doc = json::parse(overridden.out);
    CHECK(doc["config"]["lambda"].get<double>() == 0.3);
    CHECK(doc["config"]["d"].get<int>() == 3);
    CHECK(doc["config_hash"] != json::parse(flags.out)["config_hash"]);
    std::filesystem::remove(path);
  }

  TEST_CASE("exit codes and diagnostics") {
    const auto bad_flag = invoke({"bounds", "--bogus"});
    CHECK(bad_flag.code == cli::kValidationFailure);
    const auto bad_dist = invoke({"bounds", "--dist", "0:1"});
    CHECK(bad_dist.code == cli::kValidationFailure);
    CHECK(bad_dist.err.find("assumption mu(rho>0)>0 violated") != std::string::npos);
    CHECK(bad_dist.err.find('\n') == bad_dist.err.size() - 1);
    const auto seeds = invoke({"simulate", "--env-seed", "3", "--replicas", "5"});
    CHECK(seeds.code == cli::kValidationFailure);
    CHECK(invoke({"sweep", "--lambdas", "0.3", "0.2"}).code == cli::kValidationFailure);
    CHECK(invoke({"walks", "--tau-s", "3", "--d", "3"}).code == cli::kValidationFailure);
    const auto budget = invoke({"xi-mean", "--d", "2", "--depth", "3", "--lambda", "100", "--t", "100"});
    CHECK(budget.code == cli::kBudgetFailure);
    CHECK(budget.err.rfind("error: ", 0) == 0);
    const auto grid = invoke({"lambda-e", "--d", "2", "--lambdas", "0.01", "--times", "5", "20", "40", "60",
                              "--replicas", "500"});
    CHECK(grid.code == cli::kBudgetFailure);
    CHECK(grid.err.find("grid too long for replica budget") != std::string::npos);
  }

  TEST_CASE("results land in CPTREE_OUT_DIR") {
    const auto dir = std::filesystem::temp_directory_path() / "cptree_cli_out";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    ::setenv("CPTREE_OUT_DIR", dir.c_str(), 1);
    const auto r = invoke({"walks", "--d", "3", "--n", "6", "--format", "csv"});
    ::unsetenv("CPTREE_OUT_DIR");
    REQUIRE(r.code == cli::kOk);
    CHECK(std::filesystem::exists(dir / "walks.csv"));
    CHECK(r.out.find("wrote") != std::string::npos);
    std::ifstream f(dir / "walks.csv");
    std::string first;
    std::getline(f, first);
    CHECK(first.rfind("# cptree 1.0.0 command=walks", 0) == 0);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("each subcommand runs on a small input") {
    const std::vector<std::vector<std::string>> cases{
        {"sweep", "--d", "4", "--lambdas", "0.2", "0.4", "--replicas", "50", "--t-max", "10"},
        {"lambda-c", "--d", "10", "--replicas", "800", "--t-max", "20", "--size-cap", "300", "--tolerance", "0.05"},
        {"lambda-e", "--d", "6", "--lambdas", "0.05", "--times", "5", "6", "7", "8", "--replicas", "20000"},
        {"lambda-e", "--d", "6", "--lambdas", "0.05", "--times", "5", "10", "15", "20", "--replicas", "2000", "--estimator",
         "splitting"},
        {"moments", "--d", "3", "--lambda", "0.5", "--n-max", "5", "--mc-runs", "500"},
        {"xi-mean", "--d", "2", "--depth", "3", "--lambda", "0.4", "--t", "2", "--replicas", "200",
         "--annealed-envs", "5"},
        {"duality-check", "--d", "2", "--depth", "2", "--lambda", "0.5", "--t", "1", "--environments", "2",
         "--relation"},
        {"walks", "--d", "3", "--n", "10", "--x", "0.3", "1", "--pmf", "--tau-s", "2"},
    };
    for (const auto& args : cases) {
      for (const char* fmt : {"json", "csv"}) {
        auto full = args;
        full.insert(full.end(), {"--format", fmt});
        const auto r = invoke(full);
        INFO(args[0], " ", std::string(fmt), " ", r.err);
        CHECK(r.code == cli::kOk);
        json parsed;
        if (std::string(fmt) == "json") CHECK_NOTHROW(parsed = json::parse(r.out));
      }
    }
  }
}
