#include "apxn/env/tabular.hpp"
#include "apxn/experiment.hpp"
#include "apxn/mdp_io.hpp"

#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace apxn;

namespace {

std::string config_error(std::string_view text) {
  try {
    (void)parse_config(text, "cfg.toml");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ConfigError);
    return e.what();
  }
  FAIL("expected ConfigError");
  return {};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

constexpr const char* kTwoState = R"(
environment = "two-state"
method = "apxn-full"
alpha = 0.5
iterations = 3
repetitions = 2
init = "uniform"
init_low = [-1.0, -1.0]
init_high = [1.0, 1.0]
threads = 1
)";

}  // namespace

TEST_SUITE("bench-cli") {
  TEST_CASE("config: defaults and schedule keys") {
    const auto c = parse_config(kTwoState);
    CHECK(c.environment == EnvKind::two_state);
    CHECK(c.method == Method::apxn_full);
    CHECK(std::get<ConstantStep>(c.schedule).alpha == 0.5);
    CHECK(c.repetitions == 2);

    const auto t = parse_config(R"(
environment = "tetris"
estimator = "recurrent"
schedule = "line-search"
games_per_candidate = 7
)");
    const auto& ls = std::get<LineSearchStep>(t.schedule);
    CHECK(ls.games_per_candidate == 7);
    CHECK(ls.candidates.size() == 10);
    CHECK(t.n_params() == 21);

    const auto n = parse_config(R"(
environment = "nonlinear"
estimator = "forward"
method = "em"
)");
    CHECK(n.gamma == 1.0);
  }

  TEST_CASE("config errors name the line and the key") {
    CHECK(config_error("iterations = 3\nbogus = 1\n").find("cfg.toml:2") != std::string::npos);
    CHECK(config_error("iterations = 3\nbogus = 1\n").find("bogus") != std::string::npos);
    const auto type = config_error("seed = 1\niterations = \"ten\"\n");
    CHECK(type.find("cfg.toml:2") != std::string::npos);
    CHECK(type.find("iterations") != std::string::npos);
    CHECK(config_error("iterations = [\n").find("cfg.toml:") != std::string::npos);
    CHECK(config_error("method = \"newton\"\n").find("unknown method") != std::string::npos);
    CHECK(config_error("method = \"em\"\n").find("log-quadratic") != std::string::npos);
    CHECK(config_error("environment = \"tetris\"\n").find("recurrent") != std::string::npos);
    CHECK(config_error("schedule = \"line-search\"\n").find("tetris") != std::string::npos);
    CHECK(config_error("seed = -4\n").find("non-negative") != std::string::npos);
    CHECK(config_error("init = \"values\"\ninit_values = [1.0]\n").find("2 entries") != std::string::npos);
  }

  TEST_CASE("run: cardinality, layout and byte-identical reruns") {
    const auto c = parse_config(kTwoState);
    const auto a = run(c);
    const std::string csv = to_csv(a.records);
    std::istringstream lines(csv);
    std::string header, line;
    std::getline(lines, header);
    CHECK(header == "repetition,iteration,score,alpha,dir_norm,ridge,ms,seed");
    int rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 6);

    auto c3 = c;
    c3.threads = 3;
    CHECK(to_csv(run(c3).records) == csv);
    CHECK(to_json(run(c)) == to_json(a));
  }

  TEST_CASE("run: outputs on disk, trace mode and the JSON sidecar") {
    auto c = parse_config(kTwoState);
    c.trace = true;
    const auto dir = std::filesystem::temp_directory_path() / "apxn_test_cli";
    std::filesystem::remove_all(dir);
    const auto r = run(c);
    write_outputs(r, dir / "ts");
    CHECK(slurp(dir / "ts.csv") == to_csv(r.records));
    const auto trace = slurp(dir / "ts.trace.csv");
    CHECK(trace.rfind("repetition,iteration,w1,w2\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 2 * 4);

    const auto j = nlohmann::json::parse(slurp(dir / "ts.json"));
    CHECK(j["config"]["method"] == "apxn-full");
    CHECK(j["build_id"].get<std::string>() == build_id());
    CHECK(j["summary"].size() == 3);
    CHECK(j["seed_matrix"].size() == 2);
    CHECK(j["seed_matrix"][1][2].get<std::uint64_t>() == seed_matrix_entry(c.seed, 1, 3));
    const auto s = summarize(r.records);
    CHECK(j["summary"][0]["mean"].get<double>() == s[0].mean);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("tabular environment from an MDP file") {
    const auto dir = std::filesystem::temp_directory_path() / "apxn_test_mdp";
    std::filesystem::create_directories(dir);
    {
      std::ofstream(dir / "m.json") << to_json(random_tabular_mdp<double>(3, 2, 0.9, 5));
      std::ofstream(dir / "run.toml") << "environment = \"tabular\"\nmdp_file = \"m.json\"\nmethod = \"natural\"\n"
                                         "policy_params = 2\niterations = 2\n";
    }
    const auto c = load_config(dir / "run.toml");
    CHECK(c.name == "run");
    const auto r = run(c);
    CHECK(r.records.size() == 2);
    CHECK(r.records[1].score >= r.records[0].score);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("compare: passthrough, shared seed matrix and normalization") {
    auto c = parse_config(kTwoState);
    c.name = "a";
    const auto a = run(c);
    const auto one = compare({a});
    CHECK(one.labels == std::vector<std::string>{"a"});
    CHECK(one.columns[0].size() == 3);
    CHECK(one.columns[0][1].mean == summarize(a.records)[1].mean);
    CHECK(one.normalizer == 1.0);

    auto d = c;
    d.name = "b";
    d.method = Method::steepest;
    const auto two = compare({a, run(d)});
    CHECK(two.labels.size() == 2);
    CHECK(to_table(two).find("iteration\ta\tb") == 0);

    d.seed = c.seed + 1;
    try {
      (void)compare({a, run(d)});
      FAIL("expected SeedMatrixMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SeedMatrixMismatch);
    }

    const auto n = parse_config(R"(
environment = "nonlinear"
estimator = "forward"
iterations = 2
repetitions = 2
trajectories = 5
init = "values"
init_values = [-3.0, 5.0]
threads = 1
)");
    const auto cmp = compare({run(n)});
    double best = 0.0;
    for (const auto& row : cmp.columns[0]) best = std::max(best, row.mean);
    CHECK(best == doctest::Approx(1.0));
    CHECK(cmp.normalizer > 0);
  }

  TEST_CASE("verify: passes, catches a corrupted gradient, and is deterministic") {
    const auto a = verify();
    for (const auto& c : a) CHECK_MESSAGE(c.pass, c.name);
    CHECK(to_table(a) == to_table(verify()));
    VerifyOptions bad;
    bad.gradient_perturbation = 1e-3;
    const auto b = verify(bad);
    const auto it = std::find_if(b.begin(), b.end(), [](const auto& c) { return c.name == "gradient vs finite differences"; });
    REQUIRE(it != b.end());
    CHECK(!it->pass);
  }
}
